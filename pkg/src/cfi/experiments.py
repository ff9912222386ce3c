"""Experiment profiles and the end-to-end dispatch study."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .data import ContextMode, Dataset, build_contexts, split
from .flow import ConditionalFlow
from .grid import GridModel
from .sip import LowerConfig, SipConfig, UpperConfig, benchmark_schedules, solve_cfi, solve_hypercube
from .train import FitResult, TrainConfig, fit

log = logging.getLogger(__name__)


@dataclass
class FlowPreset:
    n_blocks: int
    hidden: int
    n_hidden_layers: int = 1
    shift: float | None = None
    scale: float = 1.0
    train: TrainConfig = field(default_factory=TrainConfig)


PRESETS = {
    "two-moons": FlowPreset(5, 12, train=TrainConfig(batch_size=8192, grad_clip=0.5)),
    "annulus": FlowPreset(5, 12, train=TrainConfig(batch_size=8192, grad_clip=0.5)),
    "scuc": FlowPreset(4, 12, shift=-0.5, scale=6.0, train=TrainConfig(batch_size=2048, grad_clip=1000.0)),
}


def sip_config(problem: str, method: str = "flow", **overrides) -> SipConfig:
    """Solver settings for the analytic examples or the dispatch model."""
    if problem == "scuc":
        base = SipConfig(alpha=50000.0 if method == "cube" else 500.0, tol_feas=25.0, cert_margin=1.0,
                         max_iter=40, n_cert=10000, max_cert_rounds=1,
                         lower=LowerConfig(n_starts=8, max_evals=120, grid_points=33),
                         upper=UpperConfig())
    elif problem == "annulus":
        # the set has to stay clear of the disk itself, so almost no slack
        base = SipConfig(alpha=1.0, tol_feas=1e-4, cert_margin=1e-4)
    else:
        base = SipConfig(alpha=1.0, tol_feas=0.05, cert_margin=1e-3)
    return replace(base, **overrides) if overrides else base


def train_flow(train: Dataset, val: Dataset, preset: FlowPreset, seed: int = 0, **train_overrides) -> FitResult:
    rng = np.random.default_rng(seed)
    shift = None if preset.shift is None else np.full(train.k, preset.shift)
    flow = ConditionalFlow.init(train.k, train.m, preset.n_blocks, preset.hidden, rng,
                                preset.n_hidden_layers, shift, preset.scale)
    cfg = replace(preset.train, seed=seed, **train_overrides)
    return fit(flow, train, val, cfg)


def train_restarts(train: Dataset, val: Dataset, preset: FlowPreset, seeds, **train_overrides) -> list[FitResult]:
    fits = []
    for s in seeds:
        res = train_flow(train, val, preset, s, **train_overrides)
        log.info("seed %d: best val nll %.4f at epoch %d", s, res.history[res.best_epoch].val_nll, res.best_epoch)
        fits.append(res)
    return fits


def largest_certified(fits, solve, nll_band: float = 0.05):
    """Among flows fitting within ``nll_band`` of the best validation loss, the one with the largest certified delta.

    ``solve(flow)`` returns a CfiResult.  Returns ``(fit, result)``.  Flows that
    fit equally well can still place their low-density seams very differently,
    and the set size depends on where those seams fall.
    """
    losses = [f.history[f.best_epoch].val_nll for f in fits]
    cutoff = min(losses) + nll_band
    best = None
    for f, v in zip(fits, losses):
        if v > cutoff:
            continue
        res = solve(f.flow)
        log.info("val nll %.4f: delta %.4f, converged %s", v, res.delta, res.converged)
        if res.converged and (best is None or res.delta > best[1].delta):
            best = (f, res)
    if best is None:
        raise RuntimeError("no candidate flow produced a certified set")
    return best


# -- dispatch study --------------------------------------------------------

FLOW_METHODS = {"PREV": ContextMode.PREV, "PREV_T": ContextMode.PREV_T, "PREV_TD": ContextMode.PREV_TD}
CUBE = "CUBE"  # centered at the previous hour's capacity factors
CUBE_NF = "CUBE@NF"  # centered at the PREV_TD flow's prediction f(0, c)


@dataclass
class StudyResult:
    schedules: dict[str, np.ndarray]
    deltas: dict[str, np.ndarray]
    converged: dict[str, np.ndarray]
    cf: np.ndarray
    hours: np.ndarray
    report: object
    flows: dict[str, ConditionalFlow]
    histories: dict[str, list] = field(default_factory=dict)  # per method, one delta history per hour
    center_infeasible: dict[str, np.ndarray] = field(default_factory=dict)  # no schedule covers the set center


def split_days(table, n_train_days: int, n_test_days: int):
    n_tr = 24 * n_train_days
    n_te = 24 * n_test_days
    if len(table) < n_tr + n_te:
        raise ValueError("table too short for the requested split")
    return n_tr, n_te


def fit_context_flows(table, n_train_days: int, modes, seed: int = 0, preset: FlowPreset | None = None,
                      val_frac: float = 0.15, **train_overrides) -> dict[str, ConditionalFlow]:
    preset = preset or PRESETS["scuc"]
    flows = {}
    for name in modes:
        ds = build_contexts(table, FLOW_METHODS[name])
        n = 24 * n_train_days - 1  # contexts drop the first hour
        tr, va = split(ds.subset(np.arange(n)), val_frac, rng=seed)
        res = train_flow(tr, va, preset, seed, **train_overrides)
        log.info("%s flow: best val nll %.4f", name, res.history[res.best_epoch].val_nll)
        flows[name] = res.flow
    return flows


def run_scuc_study(grid: GridModel, table, flows: dict[str, ConditionalFlow], n_train_days: int,
                   n_test_days: int, methods=None, tol: float = 25.0, hours_limit: int | None = None,
                   **cfg_overrides) -> StudyResult:
    """Solve one schedule per held-out hour for each method and score them."""
    methods = list(methods or list(flows) + [CUBE, CUBE_NF])
    n_tr, n_te = split_days(table, n_train_days, n_test_days)
    rows = np.arange(n_tr, n_tr + n_te)[:hours_limit]
    ctx = {name: build_contexts(table, FLOW_METHODS[name]).contexts for name in FLOW_METHODS}
    cfg_flow = sip_config("scuc", "flow", **cfg_overrides)
    cfg_cube = sip_config("scuc", "cube", **cfg_overrides)
    sched = {m: np.zeros((len(rows), grid.n_buses)) for m in methods}
    deltas = {m: np.zeros(len(rows)) for m in methods}
    conv = {m: np.zeros(len(rows), bool) for m in methods}
    bad_center = {m: np.zeros(len(rows), bool) for m in methods}
    hist = {m: [] for m in methods}
    for j, t in enumerate(rows):
        for m in methods:
            if m in FLOW_METHODS:
                c = ctx[m][t - 1]  # context row t-1 belongs to hour t
                res = solve_cfi(flows[m], None, c, cfg_flow, grid=grid)
            elif m == CUBE:
                res = solve_hypercube(table.cf[t - 1], None, cfg_cube, grid=grid)
            elif m == CUBE_NF:
                center = flows["PREV_TD"].forward(np.zeros(grid.n_buses), ctx["PREV_TD"][t - 1])
                res = solve_hypercube(np.clip(center, 0.0, 1.0), None, cfg_cube, grid=grid)
            else:
                raise ValueError(f"unknown method {m}")
            sched[m][j] = res.schedule.p_set
            deltas[m][j] = res.delta
            conv[m][j] = res.converged
            bad_center[m][j] = res.center_infeasible
            hist[m].append(res.state.delta_history)
        if j % 24 == 23:
            log.info("solved %d/%d hours", j + 1, len(rows))
    cf = table.cf[rows]
    hours = table.hours[rows]
    report = benchmark_schedules(grid, sched, cf, hours, tol)
    return StudyResult(sched, deltas, conv, cf, hours, report, flows, hist, bad_center)
