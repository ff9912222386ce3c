"""Lower level: find the worst realization in the current set.

Maximizes ``phi(u) = min{g(x, y(u)), alpha * (delta - measure(u))}`` with a
multi-start simplex descent (all starts advanced together as one batch),
then, for low dimensions, scans a dense grid over the set's bounding box.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .problem import SipProblem

_TIE = 1e-12


def nelder_mead_batch(f, x0, step, max_evals: int = 200, xatol: float = 1e-10):
    """Minimize ``f`` from every row of ``x0`` at once.

    ``f`` maps an ``(n, k)`` array to ``(n,)`` values.  Returns the best vertex
    and value per start, and the number of evaluations charged per start.
    """
    x0 = np.atleast_2d(np.asarray(x0, float))
    s, k = x0.shape
    step = np.broadcast_to(np.asarray(step, float), (s,))
    offsets = np.vstack([np.zeros(k), np.eye(k)])
    sim = x0[:, None, :] + step[:, None, None] * offsets[None]
    fs = f(sim.reshape(-1, k)).reshape(s, k + 1)
    evals = k + 1
    while evals + 2 <= max_evals:
        order = np.argsort(fs, axis=1, kind="stable")
        sim = np.take_along_axis(sim, order[:, :, None], axis=1)
        fs = np.take_along_axis(fs, order, axis=1)
        if np.max(np.abs(sim[:, 1:] - sim[:, :1])) < xatol:
            break
        best, worst = sim[:, 0], sim[:, -1]
        cen = sim[:, :-1].mean(axis=1)
        xr = 2.0 * cen - worst
        fr = f(xr)
        f_best, f_second, f_worst = fs[:, 0], fs[:, -2], fs[:, -1]
        expand = fr < f_best
        accept = (fr >= f_best) & (fr < f_second)
        outside = (fr >= f_second) & (fr < f_worst)
        trial = np.where(expand[:, None], 3.0 * cen - 2.0 * worst,
                         np.where(outside[:, None], 0.5 * (cen + xr), 0.5 * (cen + worst)))
        need = ~accept
        ft = np.full(s, np.inf)
        if need.any():
            ft[need] = f(trial[need])
        evals += 2

        new_x, new_f = xr.copy(), fr.copy()
        use_trial = (expand & (ft < fr)) | (outside & (ft <= fr)) | (~expand & ~accept & ~outside & (ft < f_worst))
        new_x[use_trial], new_f[use_trial] = trial[use_trial], ft[use_trial]
        shrink = (outside & (ft > fr)) | (~expand & ~accept & ~outside & (ft >= f_worst))
        keep = ~shrink
        sim[keep, -1], fs[keep, -1] = new_x[keep], new_f[keep]
        if shrink.any():
            sub = sim[shrink]
            sub[:, 1:] = sub[:, :1] + 0.5 * (sub[:, 1:] - sub[:, :1])
            fs_sub = fs[shrink]
            fs_sub[:, 1:] = f(sub[:, 1:].reshape(-1, k)).reshape(-1, k)
            sim[shrink], fs[shrink] = sub, fs_sub
            evals += k
    i = np.argmin(fs, axis=1)
    return sim[np.arange(s), i], fs[np.arange(s), i], evals


@dataclass
class LowerResult:
    u: np.ndarray
    value: float
    g: float
    measure: float
    grid_max: float = float("nan")  # best objective seen on the dense grid
    grid_improved: bool = False
    n_starts: int = 0


def _pick(values, measures):
    """Best value; ties by smallest measure, then lowest index."""
    best = np.max(values)
    cand = np.flatnonzero(values >= best - _TIE * max(1.0, abs(best)))
    return int(cand[np.lexsort((cand, measures[cand]))[0]])


def start_points(problem: SipProblem, delta: float, n: int, seed: int) -> np.ndarray:
    pts = [problem.center[None, :]]
    if n > 0 and delta > 0:
        lo, hi = problem.bounding_box(delta)
        m = int(np.ceil(np.log2(n)))
        sob = qmc.Sobol(problem.k, scramble=True, seed=seed).random_base2(m)[:n]
        pts.append(lo + sob * (hi - lo))
    return np.vstack(pts)


def _grid_scan(problem: SipProblem, x, delta, threshold, points: int, chunk: int = 65536):
    """Largest objective on a grid over the bounding box, skipping hopeless cells."""
    lo, hi = problem.bounding_box(delta)
    axes = [np.linspace(a, b, points) for a, b in zip(lo, hi)]
    best_val, best_u = -np.inf, None
    total = points ** problem.k
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(start + chunk, total)), (points,) * problem.k)
        u = np.column_stack([ax[i] for ax, i in zip(axes, idx)])
        cap = problem.alpha * (delta - problem.measure(u))
        live = cap > threshold
        if not live.any():
            j = int(np.argmax(cap))
            if cap[j] > best_val:
                best_val, best_u = float(cap[j]), u[j]
            continue
        val = cap.copy()
        val[live] = np.minimum(problem.g_at(x, u[live]), cap[live])
        j = int(np.argmax(val))
        if val[j] > best_val:
            best_val, best_u = float(val[j]), u[j]
    return best_u, best_val


def lower_level_solve(problem: SipProblem, x, delta: float, config=None) -> LowerResult:
    if delta < 0:
        raise ValueError("delta must be non-negative")
    cfg = config or problem.config.lower
    if cfg.max_evals < 1:
        raise ValueError("lower-level budget exhausted before any evaluation")
    starts = start_points(problem, delta, cfg.n_starts, cfg.seed)

    def f(u):
        return -problem.phi(x, delta, problem.project(u))

    step = max(0.1 * problem.radius(delta), 1e-3)
    if cfg.max_evals <= problem.k + 1:
        u = problem.project(starts)
        vals = -f(u)
    else:
        u, neg, _ = nelder_mead_batch(f, starts, step, cfg.max_evals)
        u, vals = problem.project(u), -neg
    # the starts themselves compete too, so a bad descent never loses ground
    u0 = problem.project(starts)
    u = np.vstack([u, u0])
    vals = np.concatenate([vals, problem.phi(x, delta, u0)])
    meas = problem.measure(u)
    i = _pick(vals, meas)
    best_u, best_val = u[i], float(vals[i])

    grid_max, improved = float("nan"), False
    cert = problem.config.cert_margin
    if 0 < problem.k <= cfg.max_grid_dim and cfg.grid_points > 1 and best_val <= problem.tol + cert:
        gu, gval = _grid_scan(problem, x, delta, best_val + cert, cfg.grid_points)
        grid_max = gval
        if gval > best_val + cert:
            cell = np.max(problem.bounding_box(delta)[1] - problem.bounding_box(delta)[0]) / (cfg.grid_points - 1)
            ru, rneg, _ = nelder_mead_batch(f, gu[None, :], max(cell, 1e-6), cfg.max_evals)
            ru = problem.project(ru)
            cand = np.vstack([gu[None, :], ru])
            cvals = problem.phi(x, delta, cand)
            j = _pick(cvals, problem.measure(cand))
            best_u, best_val, improved = cand[j], float(cvals[j]), True
    g = float(problem.g_at(x, best_u[None, :])[0])
    return LowerResult(best_u, best_val, g, float(problem.measure(best_u)), grid_max, improved, len(starts))
