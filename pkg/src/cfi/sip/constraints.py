"""Constraint functions ``g(x, y)``, vectorized over rows of ``y``; ``g <= 0`` is feasible."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import GridModel, batch_constraint_g


def himmelblau_g(y) -> np.ndarray:
    """``10 - h(y)`` with a stretched, shifted Himmelblau-type function ``h``."""
    y = np.asarray(y, float)
    u = y[..., 0] + 0.9
    b = y[..., 1]
    h = (0.53 * u * u + b - 11.0) ** 2 + (0.53 * u + b * b - 7.0) ** 2
    return 10.0 - h


def himmelblau_squared_g(y) -> np.ndarray:
    """Same as :func:`himmelblau_g` but with the 0.53 factor inside the square.

    Its infeasible pockets sit off the moons' arcs; with it the mean-centered
    conditional cubes cover about 40 % (c=0) and 52 % (c=1) of the moons.
    """
    y = np.asarray(y, float)
    a = 0.53 * (y[..., 0] + 0.9)
    b = y[..., 1]
    h = (a * a + b - 11.0) ** 2 + (a + b * b - 7.0) ** 2
    return 10.0 - h


def annulus_g(y) -> np.ndarray:
    """Positive inside the disk of radius 0.5."""
    y = np.asarray(y, float)
    return 0.25 - np.sum(y * y, axis=-1)


def design_free(fn):
    """Lift a data-space constraint ``fn(y)`` to the ``g(x, y)`` signature."""

    def g(x, y):
        return fn(y)

    g.__name__ = getattr(fn, "__name__", "g")
    return g


@dataclass
class ScucConstraint:
    """Dispatch constraint in MW; ``y`` holds capacity factors per bus."""

    grid: GridModel

    def renewables(self, cf) -> np.ndarray:
        return np.maximum(0.0, np.asarray(cf, float)) * self.grid.ren_capacity

    def __call__(self, x, cf) -> np.ndarray:
        return batch_constraint_g(self.grid, x, self.renewables(cf))
