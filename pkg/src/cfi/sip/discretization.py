"""Adaptive discretization: alternate the upper and lower level, accumulating cuts.

For fixed-design problems each violating realization found by the lower level
is pulled back along the ray from the set center to the first point where
``g`` exceeds the tolerance, and that point becomes the cut.  With design
variables the realization itself is the cut, together with a few points
farther out on the same ray so that the setpoints cannot keep dodging cuts
that creep outward.  Once the lower level
reports feasibility, a uniform sample of the set double-checks the result; a
violating sample is turned into a cut the same way and the loop resumes.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from ..grid import GridModel, Schedule
from ..usets import analytical_coverage
from .constraints import ScucConstraint
from .lower import LowerResult, lower_level_solve, nelder_mead_batch
from .problem import BALL, CUBE, SipConfig, SipProblem
from .upper import upper_level_fixed_design, upper_level_scuc

log = logging.getLogger(__name__)

BF = "bf"
CERTIFICATE = "certificate"
SHRINK = "shrink"


@dataclass
class Scenario:
    u: np.ndarray  # point in the set's coordinates
    y: np.ndarray  # the same point in data space
    measure: float
    g: float  # constraint value at insertion
    ll_value: float  # lower-level value that triggered the cut
    iteration: int
    kind: str = BF


@dataclass
class IterationRecord:
    iteration: int
    delta: float
    x: np.ndarray | None
    ll_value: float
    ll_u: np.ndarray
    grid_max: float
    kind: str  # "bf" cut, "certificate" cut, "shrink" with x held, or "final"


@dataclass
class DiscretizationState:
    scenarios: list[Scenario] = field(default_factory=list)
    iterations: list[IterationRecord] = field(default_factory=list)

    @property
    def delta_history(self) -> list[float]:
        return [r.delta for r in self.iterations]

    @property
    def x_history(self) -> list:
        return [r.x for r in self.iterations]

    @property
    def measures(self) -> np.ndarray:
        return np.array([s.measure for s in self.scenarios], float)

    @property
    def cut_data(self) -> np.ndarray:
        if not self.scenarios:
            return np.zeros((0, 0))
        return np.vstack([s.y for s in self.scenarios])


def tighten_cut(problem: SipProblem, x, u_star, n_scan: int = 64, n_bisect: int = 50) -> np.ndarray:
    """First point on the segment center -> ``u_star`` where ``g`` exceeds the tolerance."""
    c = problem.center
    d = np.asarray(u_star, float) - c
    ts = np.linspace(0.0, 1.0, n_scan + 1)
    g = problem.g_at(x, c + ts[:, None] * d)
    bad = np.flatnonzero(g > problem.tol)
    if bad.size == 0:
        return np.asarray(u_star, float)
    j = bad[0]
    if j == 0:
        return c.copy()
    a, b = ts[j - 1], ts[j]
    for _ in range(n_bisect):
        mid = 0.5 * (a + b)
        if problem.g_at(x, (c + mid * d)[None, :])[0] > problem.tol:
            b = mid
        else:
            a = mid
    return c + b * d


def ray_ladder(problem: SipProblem, x, u_star, delta: float) -> list[np.ndarray]:
    """Points beyond ``u_star`` on the center ray, measure doubling each step.

    The last rung sits where ``alpha*(delta - measure) = tol``; every point
    farther out already meets the lower-level tolerance through the set term.
    Only rungs where ``g`` keeps rising are returned.
    """
    u_star = np.asarray(u_star, float)
    c = problem.center
    m = float(problem.measure(u_star))
    target = delta - problem.tol / problem.alpha
    if m <= 0 or target <= m:
        return []
    levels = []
    lv = 2.0 * m
    while lv < target:
        levels.append(lv)
        lv *= 2.0
    levels.append(target)
    ratio = np.asarray(levels) / m
    # squared norm for balls, plain L-infinity distance for cubes
    t = np.sqrt(ratio) if problem.kind == BALL else ratio
    pts = problem.project(c + t[:, None] * (u_star - c))
    g = problem.g_at(x, np.vstack([u_star[None, :], pts]))
    rising = np.maximum.accumulate(g)[1:] == g[1:]
    return [p for p, r in zip(pts, rising) if r and np.isfinite(g).all()]


def _sample_g(problem: SipProblem, x, delta: float, n: int, seed):
    """Uniform samples of the set, with the highest few polished by local ascent of ``g``.

    Plain sampling misses thin violating slivers near the boundary of the
    set; the polish walks the best samples uphill while staying in the set.
    """
    if delta <= 0:
        u = problem.center[None, :]
        return u, problem.g_at(x, u)
    u = problem.sample_set(delta, n, seed)
    g = problem.g_at(x, u)
    n_top = min(problem.config.cert_refine, len(u))
    if n_top == 0:
        return u, g
    top = np.argsort(-g, kind="stable")[:n_top]

    def neg_g(v):
        return -problem.g_at(x, problem.clamp_to_set(v, delta))

    step = 0.05 * problem.radius(delta)
    v, _, _ = nelder_mead_batch(neg_g, u[top], step, max_evals=problem.config.lower.max_evals)
    v = problem.clamp_to_set(v, delta)
    return np.vstack([u, v]), np.concatenate([g, problem.g_at(x, v)])


def certify(problem: SipProblem, x, delta: float, n: int, seed) -> tuple[float, np.ndarray]:
    """Largest ``g`` over ``n`` uniform samples of the set (top few polished), and where it occurs."""
    u, g = _sample_g(problem, x, delta, n, seed)
    i = int(np.argmax(g))
    return float(g[i]), u[i]


def certificate_cuts(problem: SipProblem, x, delta: float, n: int, seed, level: float):
    """Largest sampled ``g`` plus the samples worth turning into cuts.

    Those are the worst sample and, if different, the violating sample
    closest to the center, which bounds ``delta`` when ``x`` cannot move.
    """
    u, g = _sample_g(problem, x, delta, n, seed)
    i = int(np.argmax(g))
    pts = [u[i]]
    bad = np.flatnonzero(g > level)
    if len(bad):
        j = int(bad[np.argmin(problem.measure(u[bad]))])
        if j != i:
            pts.append(u[j])
    return float(g[i]), pts


class FixedDesignUpper:
    """No design variables: delta follows from the cut measures alone."""

    def __call__(self, problem: SipProblem, state: DiscretizationState, x):
        cfg = problem.config
        return None, upper_level_fixed_design(state.measures, cfg.delta_max, cfg.alpha, cfg.upper_tol)


@dataclass
class ScucUpper:
    grid: GridModel

    def __call__(self, problem: SipProblem, state: DiscretizationState, x):
        cfg = problem.config
        hint = None
        if x is None:
            cf0 = problem.to_data(problem.center[None, :])[0]
            net = float(np.sum(self.grid.demand - np.maximum(0.0, cf0) * self.grid.ren_capacity))
            hint = np.clip(self.grid.participation * net, 0.0, self.grid.conv_capacity)
        cut = state.cut_data.reshape(-1, self.grid.n_buses)
        res = upper_level_scuc(self.grid, problem.g, cut, state.measures, cfg.delta_max, cfg.alpha,
                               cfg.tol_feas, cfg.upper, cfg.upper_tol, warm=x, hint=hint)
        return res.x, res.delta


@dataclass
class BFResult:
    x: np.ndarray | None
    delta: float
    state: DiscretizationState
    converged: bool
    certificate: dict
    center_infeasible: bool


def blankenship_falk(problem: SipProblem, upper=None, x0=None) -> BFResult:
    cfg = problem.config
    upper = upper or FixedDesignUpper()
    state = DiscretizationState()
    x = x0
    delta_cap = cfg.delta_max
    cert_rounds = 0
    converged = False
    delta = cfg.delta_max
    cert = {"n_samples": 0, "max_g": float("nan"), "seed": cfg.seed}

    def add_cut(u_star, value, it, kind):
        if x is None:
            pts = [tighten_cut(problem, x, u_star)]
        elif kind == BF:
            # with design variables the raw point is kept, plus rungs farther
            # out so x cannot dodge one cut by a hair and meet the next
            pts = [np.asarray(u_star, float)] + ray_ladder(problem, x, u_star, delta)
        else:
            # a certificate violation sits in the boundary shell the lower
            # level tolerates; its pulled-in copy tells the upper level how
            # far delta must shrink if x stays put
            pts = [np.asarray(u_star, float)]
            inner = tighten_cut(problem, x, u_star)
            if problem.measure(inner) < problem.measure(pts[0]):
                pts.append(inner)
        for u in pts:
            y = problem.to_data(u[None, :])[0]
            g = float(problem.g_at(x, u[None, :])[0])
            state.scenarios.append(Scenario(u, y, float(problem.measure(u)), g, value, it, kind))

    for it in range(cfg.max_iter):
        x, delta = upper(problem, state, x)
        delta = min(delta, delta_cap)
        delta_cap = delta
        lr: LowerResult = lower_level_solve(problem, x, delta)
        rec = IterationRecord(it, delta, None if x is None else np.array(x), lr.value, lr.u, lr.grid_max, "final")
        state.iterations.append(rec)
        if lr.value > problem.tol:
            rec.kind = BF
            add_cut(lr.u, lr.value, it, BF)
            continue
        n = cfg.n_cert if delta > 0 else 1
        # cutting at half the margin leaves headroom for an independent check
        level = problem.tol + 0.5 * cfg.cert_margin
        max_g, bad = certificate_cuts(problem, x, delta, n, cfg.seed + 7919 * (cert_rounds + 1), level)
        cert = {"n_samples": n, "max_g": max_g, "seed": cfg.seed}
        if delta > 0 and max_g > level:
            if cert_rounds < cfg.max_cert_rounds:
                cert_rounds += 1
                rec.kind = CERTIFICATE
                for u_bad in (bad if x is not None else bad[:1]):
                    add_cut(u_bad, lr.value, it, CERTIFICATE)
                continue
            # moving x has stopped paying off; hold it and pull delta inside
            # the violations instead, which keeps the lower level feasible
            for _ in range(cfg.max_shrink_rounds):
                rec.kind = SHRINK
                delta = min(float(problem.measure(tighten_cut(problem, x, u))) for u in bad)
                cert_rounds += 1
                max_g, bad = certificate_cuts(problem, x, delta, n, cfg.seed + 7919 * (cert_rounds + 1), level)
                cert = {"n_samples": n, "max_g": max_g, "seed": cfg.seed}
                rec = IterationRecord(it, delta, rec.x, rec.ll_value, rec.ll_u, rec.grid_max, "final")
                state.iterations.append(rec)
                if delta <= 0 or max_g <= level:
                    break
        # at delta = 0 the only sample is the center, so an infeasible center is never converged
        converged = max_g <= problem.tol + cfg.cert_margin
        break
    else:
        log.warning("adaptive discretization hit max_iter=%d without a feasible lower level", cfg.max_iter)

    g0 = float(problem.g_at(x, problem.center[None, :])[0])
    return BFResult(x, delta, state, converged, cert, g0 > problem.tol)


@dataclass
class CfiResult:
    delta: float
    kind: str
    state: DiscretizationState
    converged: bool
    certificate: dict
    center_infeasible: bool
    analytical_coverage: float | None = None
    schedule: Schedule | None = None
    context: np.ndarray | None = None
    center: np.ndarray | None = None

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "delta": self.delta,
            "coverage": self.analytical_coverage,
            "converged": self.converged,
            "center_infeasible": self.center_infeasible,
            "context": None if self.context is None else np.asarray(self.context).tolist(),
            "center": None if self.center is None else np.asarray(self.center).tolist(),
            "schedule": None if self.schedule is None else {
                "p_set": self.schedule.p_set.tolist(),
                "p_lb": self.schedule.p_lb.tolist(),
                "p_ub": self.schedule.p_ub.tolist(),
            },
            "iterations": [
                {"delta": r.delta, "scenario_l": np.asarray(r.ll_u).tolist(), "ll_value": r.ll_value, "kind": r.kind}
                for r in self.state.iterations
            ],
            "certificate": self.certificate,
        }
        return _round(out)


def _round(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}") if np.isfinite(obj) else None
    if isinstance(obj, dict):
        return {k: _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return _round(obj.item())
    return obj


def write_result(results, path) -> None:
    results = results if isinstance(results, list) else [results]
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in results], fh, indent=1)


def write_iterations(result: CfiResult, path) -> None:
    k = len(result.state.iterations[0].ll_u) if result.state.iterations else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "kind", "delta", "ll_value", "grid_max"] + [f"u{i + 1}" for i in range(k)])
        for r in result.state.iterations:
            w.writerow([r.iteration, r.kind, f"{r.delta:.9g}", f"{r.ll_value:.9g}", f"{r.grid_max:.9g}"]
                       + [f"{v:.9g}" for v in r.ll_u])


def _lift(g, grid):
    if grid is not None:
        return g or ScucConstraint(grid)
    return lambda x, y: g(y)


def solve_cfi(flow, g=None, context=None, config=None, grid: GridModel | None = None) -> CfiResult:
    """Largest latent ball whose image under the flow keeps ``g`` feasible.

    Without a grid, ``g(y)`` is a fixed-design constraint; with a grid the
    generator setpoints are optimized too and ``g`` defaults to the dispatch
    constraint on capacity factors.
    """
    config = config or SipConfig()
    problem = SipProblem(_lift(g, grid), flow.k, BALL, flow, context, config=config)
    upper = ScucUpper(grid) if grid is not None else FixedDesignUpper()
    res = blankenship_falk(problem, upper)
    sched = Schedule(res.x, grid.conv_capacity) if grid is not None else None
    return CfiResult(res.delta, BALL, res.state, res.converged, res.certificate, res.center_infeasible,
                     analytical_coverage(flow.k, res.delta), sched,
                     None if context is None else np.asarray(context, float))


def solve_hypercube(center, g=None, config=None, grid: GridModel | None = None, box=None) -> CfiResult:
    """Largest L-infinity cube around ``center`` keeping ``g`` feasible.

    With a grid the cube lives in capacity-factor space, clipped to [0, 1].
    """
    config = config or SipConfig()
    center = np.asarray(center, float).reshape(-1)
    if grid is not None and box is None:
        box = (0.0, 1.0)
        center = np.clip(center, 0.0, 1.0)
    problem = SipProblem(_lift(g, grid), len(center), CUBE, center=center, box=box, config=config)
    upper = ScucUpper(grid) if grid is not None else FixedDesignUpper()
    res = blankenship_falk(problem, upper)
    sched = Schedule(res.x, grid.conv_capacity) if grid is not None else None
    return CfiResult(res.delta, CUBE, res.state, res.converged, res.certificate, res.center_infeasible,
                     None, sched, center=center)
