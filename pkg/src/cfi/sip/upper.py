"""Upper level: largest set size (and, for dispatch, best setpoints) given the cuts."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from ..grid import GridModel, Schedule, constraint_g
from .problem import UpperConfig

log = logging.getLogger(__name__)


def upper_level_fixed_design(measures, delta_max: float, alpha: float, tol_feas: float) -> float:
    """Largest delta with ``alpha * (delta - m_k) <= tol_feas`` for every cut ``m_k``."""
    measures = np.asarray(measures, float).reshape(-1)
    if measures.size == 0:
        return float(delta_max)
    return float(min(delta_max, np.min(measures) + tol_feas / alpha))


@dataclass
class UpperResult:
    x: np.ndarray
    delta: float
    blocking: int  # index of the cut that fixes delta, -1 if none
    margin: float  # slack of the worst respected cut inside the set


def _score(g, measures, delta_max, alpha, tol_up, tol_cut):
    """Per-design delta and tie-break margin; ``g`` is (designs, cuts)."""
    n = g.shape[0]
    if g.shape[1] == 0:
        return np.full(n, float(delta_max)), np.zeros(n), np.full(n, -1)
    violated = g > tol_cut
    m = np.where(violated, measures[None, :] + tol_up / alpha, np.inf)
    blocking = np.argmin(m, axis=1)
    delta = np.minimum(delta_max, m[np.arange(n), blocking])
    binds = np.isfinite(m[np.arange(n), blocking]) & (m[np.arange(n), blocking] <= delta_max)
    # prefer the most slack on the cuts the set must respect, which keeps x
    # away from the edge of its feasible region; with none, progress on the
    # blocking cut
    inside = ~violated & (measures[None, :] <= delta[:, None])
    worst = np.max(np.where(inside, g, -np.inf), axis=1)
    fallback = np.where(binds, g[np.arange(n), blocking], np.max(g, axis=1)) - tol_cut
    margin = np.where(inside.any(axis=1), tol_cut - worst, -fallback)
    return delta, margin, np.where(binds, blocking, -1)


def _better(d1, m1, d2, m2):
    return (d1 > d2 + 1e-12) | ((np.abs(d1 - d2) <= 1e-12) & (m1 > m2 + 1e-9))


def pattern_search(score, lo, hi, starts, cfg: UpperConfig):
    """Maximize a lexicographic score by coordinate polling from every start at once."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    x = np.clip(np.atleast_2d(starts), lo, hi)
    s, n = x.shape
    d, m = score(x)
    step = np.tile(cfg.initial_step * (hi - lo), (s, 1))
    for _ in range(cfg.levels):
        for _ in range(cfg.max_moves):
            polls = np.concatenate([np.eye(n), -np.eye(n)])  # (2n, n)
            cand = np.clip(x[:, None, :] + polls[None] * step[:, None, :], lo, hi)
            cd, cm = score(cand.reshape(-1, n))
            cd, cm = cd.reshape(s, 2 * n), cm.reshape(s, 2 * n)
            # best poll per start, lexicographically
            order = np.lexsort((-cm, -cd), axis=1)[:, 0]
            bd, bm = cd[np.arange(s), order], cm[np.arange(s), order]
            move = _better(bd, bm, d, m)
            if not move.any():
                break
            x[move] = cand[np.arange(s), order][move]
            d[move], m[move] = bd[move], bm[move]
        step *= cfg.shrink
    return x, d, m


def upper_level_scuc(grid: GridModel, g, cut_data, cut_measures, delta_max: float, alpha: float,
                     tol_feas: float, cfg: UpperConfig, tol_up: float = 0.0, warm=None, hint=None) -> UpperResult:
    """Setpoints maximizing the set size admitted by the accumulated cuts.

    ``g(X, CF)`` evaluates the constraint for designs ``X`` (..., N) against
    capacity factors; ``cut_data`` holds each cut's capacity factors and
    ``cut_measures`` its set measure.
    """
    p_max = grid.conv_capacity
    lo, hi = np.zeros_like(p_max), p_max.copy()
    cut_data = np.asarray(cut_data, float).reshape(-1, grid.n_buses)
    cut_measures = np.asarray(cut_measures, float).reshape(-1)

    def score(xs):
        if len(cut_data) == 0:
            return np.full(len(xs), float(delta_max)), np.zeros(len(xs))
        gv = g(xs[:, None, :], cut_data[None, :, :])
        dd, mm, _ = _score(gv, cut_measures, delta_max, alpha, tol_up, tol_feas)
        return dd, mm

    starts = []
    if warm is not None:
        starts.append(np.asarray(warm, float))
    if hint is not None:
        starts.append(np.clip(np.asarray(hint, float), lo, hi))
    n_rand = max(cfg.n_starts - len(starts), 0)
    if n_rand:
        m = int(np.ceil(np.log2(max(n_rand, 2))))
        sob = qmc.Sobol(grid.n_buses, scramble=True, seed=cfg.seed).random_base2(m)[:n_rand]
        starts.extend(lo + sob * (hi - lo))
    x, d, mg = pattern_search(score, lo, hi, np.array(starts), cfg)
    order = np.lexsort((np.arange(len(x)), -mg, -d))
    best = order[0]
    xb = x[best]
    # re-validate the winner against every cut through the scalar dispatch route
    if len(cut_data):
        sched = Schedule(xb, p_max)
        gs = np.array([constraint_g(grid, sched, np.maximum(0.0, cf) * grid.ren_capacity) for cf in cut_data])
        dd, mm, blk = _score(gs[None, :], cut_measures, delta_max, alpha, tol_up, tol_feas)
        delta, margin, blocking = float(dd[0]), float(mm[0]), int(blk[0])
    else:
        delta, margin, blocking = float(delta_max), 0.0, -1
    if delta <= 0:
        log.warning("no schedule covers the set center; delta=%g", delta)
    return UpperResult(xb, delta, blocking, margin)
