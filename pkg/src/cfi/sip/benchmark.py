"""Score hourly schedules against realized capacity factors."""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field

import numpy as np

from ..grid import GridModel, batch_constraint_g


@dataclass
class BenchmarkReport:
    methods: list[str]
    share: dict[str, float]
    share_by_hour: dict[str, np.ndarray]  # (24,), nan where an hour has no data
    count_by_hour: np.ndarray
    dpset_by_hour: dict[tuple[str, str], np.ndarray]
    causes: dict[str, dict[str, float]]
    feasible: dict[str, np.ndarray] = field(default_factory=dict)


def benchmark_schedules(grid: GridModel, schedules: dict, cf, hours, tol: float) -> BenchmarkReport:
    """``schedules`` maps a method name to an (n, buses) array of setpoints,
    one row per realization in ``cf``; ``hours`` gives each row's hour of day."""
    cf = np.atleast_2d(np.asarray(cf, float))
    hours = np.asarray(hours, int)
    if len(cf) != len(hours):
        raise ValueError("cf and hours differ in length")
    ren = np.clip(cf, 0.0, 1.0) * grid.ren_capacity
    methods = list(schedules)
    count = np.bincount(hours, minlength=24)[:24].astype(float)
    share, by_hour, causes, feas = {}, {}, {}, {}
    for m in methods:
        p_set = np.asarray(schedules[m], float).reshape(len(cf), grid.n_buses)
        g, parts = batch_constraint_g(grid, p_set, ren, with_parts=True)
        ok = g <= tol
        feas[m] = ok
        share[m] = float(np.mean(ok)) if len(ok) else float("nan")
        hit = np.bincount(hours, weights=ok.astype(float), minlength=24)[:24]
        with np.errstate(invalid="ignore", divide="ignore"):
            by_hour[m] = np.where(count > 0, hit / count, np.nan)
        causes[m] = {
            "overproduction": float(np.mean(parts["over"] > tol)),
            "underproduction": float(np.mean(parts["under"] > tol)),
            "line": float(np.mean(parts["balance_ok"] & (parts["line"] > tol))),
        }
    dpset = {}
    for a, b in itertools.combinations(methods, 2):
        diff = np.sum(np.asarray(schedules[a], float) - np.asarray(schedules[b], float), axis=-1).reshape(-1)
        tot = np.bincount(hours, weights=diff, minlength=24)[:24]
        with np.errstate(invalid="ignore", divide="ignore"):
            dpset[(a, b)] = np.where(count > 0, tot / count, np.nan)
    return BenchmarkReport(methods, share, by_hour, count, dpset, causes, feas)


def write_benchmark(report: BenchmarkReport, path) -> None:
    pairs = list(report.dpset_by_hour)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hour", "n"] + [f"share_{m}" for m in report.methods]
                   + [f"dpset_{a}_minus_{b}" for a, b in pairs])
        for h in range(24):
            w.writerow([h, int(report.count_by_hour[h])]
                       + [_f(report.share_by_hour[m][h]) for m in report.methods]
                       + [_f(report.dpset_by_hour[p][h]) for p in pairs])
        w.writerow(["all", int(report.count_by_hour.sum())] + [_f(report.share[m]) for m in report.methods]
                   + ["" for _ in pairs])
        for cause in ("overproduction", "underproduction", "line"):
            w.writerow([cause, ""] + [_f(report.causes[m][cause]) for m in report.methods] + ["" for _ in pairs])


def _f(v) -> str:
    return "" if not np.isfinite(v) else f"{v:.9g}"
