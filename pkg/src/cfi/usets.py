"""Admissible uncertainty sets and their coverage.

Two kinds of set: a ball of squared radius ``delta`` in the latent space of a
flow (mapped to data space through the flow), and a data-space hypercube of
half-width ``delta``.  For a ball the probability mass under the standard
Gaussian is the chi-squared CDF with ``k`` degrees of freedom at ``delta``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .flow import ConditionalFlow

_EPS = 1e-15
_TINY = 1e-300


def _gamma_series(a: float, x: float, tol: float, max_iter: int) -> float:
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * tol:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cf(a: float, x: float, tol: float, max_iter: int) -> float:
    # modified Lentz evaluation of the continued fraction for Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, max_iter + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < tol:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_lower_gamma(a: float, x: float, tol: float = 1e-14, max_iter: int = 500) -> float:
    """P(a, x) = gamma(a, x) / Gamma(a)."""
    if a <= 0:
        raise ValueError("shape a must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x, tol, max_iter))
    return max(0.0, 1.0 - _gamma_cf(a, x, tol, max_iter))


def chi2_cdf(k: int, x: float) -> float:
    if int(k) != k or k < 1:
        raise ValueError("degrees of freedom must be a positive integer")
    if x < 0:
        raise ValueError("chi-squared argument must be non-negative")
    return regularized_lower_gamma(0.5 * k, 0.5 * x)


def analytical_coverage(k: int, delta: float) -> float:
    return chi2_cdf(k, delta)


@dataclass
class LatentBall:
    delta: float
    flow: ConditionalFlow

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be non-negative")

    def slack(self, y, c=None) -> np.ndarray:
        l = self.flow.inverse(y, c)
        return self.delta - np.sum(np.asarray(l) ** 2, axis=-1)

    def analytical_coverage(self) -> float:
        return analytical_coverage(self.flow.k, self.delta)


@dataclass
class HypercubeSet:
    center: np.ndarray
    delta: float

    def __post_init__(self):
        self.center = np.asarray(self.center, float).reshape(-1)
        if self.delta < 0:
            raise ValueError("delta must be non-negative")

    def slack(self, y, c=None) -> np.ndarray:
        y = np.asarray(y, float)
        return self.delta - np.max(np.abs(y - self.center), axis=-1)


def membership(uset, y, c=None):
    """Return ``(member, slack)``; works on one point or a batch."""
    s = uset.slack(y, c)
    return s >= 0.0, s


def empirical_coverage(uset, samples, c=None) -> float:
    y = samples.samples if hasattr(samples, "samples") else np.asarray(samples, float)
    y = np.atleast_2d(y)
    if len(y) == 0:
        raise ValueError("empirical coverage needs at least one sample")
    member, _ = membership(uset, y, c)
    return float(np.mean(member))


def cube_center(ds, c=None) -> np.ndarray:
    """Unconditional mean, or the mean of the rows whose context equals ``c``."""
    if c is None:
        return ds.samples.mean(axis=0)
    sub = ds.where_context(c)
    if len(sub) == 0:
        raise ValueError(f"no samples with context {c}")
    return sub.samples.mean(axis=0)


def write_coverage_report(rows, path) -> None:
    """Rows are dicts with keys set_id, delta, analytical, empirical, n (+ optional extras)."""
    rows = list(rows)
    keys = ["set_id", "delta", "analytical", "empirical", "n"]
    extra = sorted({k for r in rows for k in r} - set(keys))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(keys + extra)
        for r in rows:
            w.writerow([_fmt(r.get(k, "")) for k in keys + extra])


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.9g}"
    return v
