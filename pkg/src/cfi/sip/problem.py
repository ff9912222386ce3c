"""Problem description shared by the lower level, upper level and outer loop."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..flow import ConditionalFlow

BALL = "ball"
CUBE = "cube"


@dataclass
class LowerConfig:
    n_starts: int = 16  # quasi-random starts in addition to the center
    max_evals: int = 200  # per start, simplex descent
    grid_points: int = 201  # per axis; 0 disables the dense check
    max_grid_dim: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.max_evals < 1:
            raise ValueError("lower-level budget must allow at least one evaluation")
        if self.n_starts < 0 or self.grid_points < 0:
            raise ValueError("start and grid counts must be non-negative")


@dataclass
class UpperConfig:
    n_starts: int = 8
    shrink: float = 0.5
    levels: int = 10
    max_moves: int = 30
    initial_step: float = 0.25  # fraction of each coordinate's range
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink factor must be in (0, 1)")
        if self.n_starts < 1 or self.levels < 1:
            raise ValueError("need at least one start and one level")


@dataclass
class SipConfig:
    alpha: float = 1.0
    tol_feas: float = 0.05
    delta_max: float = 25.0
    cert_margin: float = 1e-3
    max_iter: int = 50
    n_cert: int = 20000
    max_cert_rounds: int = 25  # rounds that re-optimize x before delta is shrunk with x held
    max_shrink_rounds: int = 25
    cert_refine: int = 8  # top samples polished by local ascent of g
    tol_in_upper: bool = False
    seed: int = 0
    lower: LowerConfig = field(default_factory=LowerConfig)
    upper: UpperConfig = field(default_factory=UpperConfig)

    def __post_init__(self):
        if isinstance(self.lower, dict):
            self.lower = LowerConfig(**self.lower)
        if isinstance(self.upper, dict):
            self.upper = UpperConfig(**self.upper)
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.tol_feas > 0:
            raise ValueError("tol_feas must be positive")
        if not self.delta_max > 0:
            raise ValueError("delta_max must be positive")
        if self.cert_margin < 0:
            raise ValueError("cert_margin must be non-negative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    @property
    def upper_tol(self) -> float:
        return self.tol_feas if self.tol_in_upper else 0.0


@dataclass
class SipProblem:
    """Constraint ``g(x, y)`` over an uncertainty set parameterized by ``delta``.

    Points ``u`` live in the set's own coordinates: latent vectors for a ball
    (mapped to data space by the flow under the fixed context) and data
    vectors for a cube.  ``box`` optionally restricts a cube to a data-space
    box, e.g. capacity factors in [0, 1].
    """

    g: Callable
    k: int
    kind: str = BALL
    flow: ConditionalFlow | None = None
    context: np.ndarray | None = None
    center: np.ndarray | None = None
    box: tuple | None = None
    config: SipConfig = field(default_factory=SipConfig)

    def __post_init__(self):
        if self.kind not in (BALL, CUBE):
            raise ValueError(f"unknown set kind {self.kind!r}")
        if self.kind == BALL:
            self.center = np.zeros(self.k)
            if self.box is not None:
                raise ValueError("a box only applies to cube sets")
        else:
            if self.center is None:
                raise ValueError("cube sets need a center")
            self.center = np.asarray(self.center, float).reshape(self.k)
        if self.box is not None:
            lo, hi = (np.broadcast_to(np.asarray(b, float), (self.k,)) for b in self.box)
            self.box = (lo, hi)
            if np.any(self.center < lo) or np.any(self.center > hi):
                raise ValueError("cube center lies outside the box")

    @property
    def alpha(self) -> float:
        return self.config.alpha

    @property
    def tol(self) -> float:
        return self.config.tol_feas

    def project(self, u) -> np.ndarray:
        u = np.asarray(u, float)
        if self.box is None:
            return u
        return np.clip(u, self.box[0], self.box[1])

    def to_data(self, u) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, float))
        if self.kind == BALL and self.flow is not None:
            return self.flow.forward(u, self.context)
        return u

    def g_at(self, x, u) -> np.ndarray:
        return np.asarray(self.g(x, self.to_data(u)), float)

    def measure(self, u) -> np.ndarray:
        u = np.asarray(u, float)
        if self.kind == BALL:
            return np.sum(u * u, axis=-1)
        return np.max(np.abs(u - self.center), axis=-1)

    def phi(self, x, delta, u, with_g: bool = False):
        """Lower-level objective ``min{g, alpha * (delta - measure)}``."""
        u = np.atleast_2d(u)
        g = self.g_at(x, u)
        val = np.minimum(g, self.alpha * (delta - self.measure(u)))
        return (val, g) if with_g else val

    def radius(self, delta: float) -> float:
        """Half-width of the set's bounding box."""
        return float(np.sqrt(max(delta, 0.0))) if self.kind == BALL else float(max(delta, 0.0))

    def bounding_box(self, delta: float):
        r = self.radius(delta)
        lo, hi = self.center - r, self.center + r
        if self.box is not None:
            lo, hi = np.maximum(lo, self.box[0]), np.minimum(hi, self.box[1])
        return lo, hi

    def clamp_to_set(self, u, delta: float) -> np.ndarray:
        """Nearest point of the set along the center ray (balls) or by clipping (cubes)."""
        u = np.atleast_2d(np.asarray(u, float))
        if self.kind == BALL:
            r = np.sqrt(max(delta, 0.0))
            nrm = np.linalg.norm(u, axis=1, keepdims=True)
            return np.where(nrm > r, u * (r / np.maximum(nrm, 1e-300)), u)
        lo, hi = self.bounding_box(delta)
        return np.clip(u, lo, hi)

    def sample_set(self, delta: float, n: int, rng) -> np.ndarray:
        """Uniform samples in the set (intersected with the box, if any)."""
        rng = np.random.default_rng(rng)
        if self.kind == BALL:
            d = rng.standard_normal((n, self.k))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            r = np.sqrt(max(delta, 0.0)) * rng.uniform(size=(n, 1)) ** (1.0 / self.k)
            return d * r
        lo, hi = self.bounding_box(delta)
        return rng.uniform(lo, hi, size=(n, self.k))
