"""Linearized power-flow model for the unit-commitment example.

Conventional generators follow their setpoints and share any injection
imbalance through participation factors, saturating at a +/-5 % window around
the setpoint.  Line flows follow ``P_line = h * (theta_to - theta_from)`` and
each bus balances ``P_dem - P_ren - P_gen - inflow + outflow = 0``.

When total net demand falls outside the generators' aggregate window the
balance cannot be met; then the line flows are zero and the constraint value
is the balance violation.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

RAMP_FRACTION = 0.05


class ModelError(ValueError):
    pass


@dataclass
class Line:
    from_bus: int  # 0-based
    to_bus: int
    admittance: float  # MW
    capacity: float  # MW


@dataclass
class GridModel:
    lines: list[Line]
    conv_capacity: np.ndarray
    ren_capacity: np.ndarray
    demand: np.ndarray
    participation: np.ndarray | None = None
    name: str = ""
    _ptdf: np.ndarray = field(default=None, init=False, repr=False)  # type: ignore[assignment]
    _theta_map: np.ndarray = field(default=None, init=False, repr=False)  # type: ignore[assignment]

    def __post_init__(self):
        self.conv_capacity = np.asarray(self.conv_capacity, float)
        self.ren_capacity = np.asarray(self.ren_capacity, float)
        self.demand = np.asarray(self.demand, float)
        n = self.n_buses
        for arr, name in ((self.ren_capacity, "ren_capacity"), (self.demand, "demand")):
            if arr.shape != (n,):
                raise ModelError(f"{name} must have one entry per bus")
        if np.any(self.conv_capacity < 0) or np.any(self.ren_capacity < 0):
            raise ModelError("capacities must be non-negative")
        if self.participation is None:
            self.participation = self.conv_capacity / self.conv_capacity.sum()
        self.participation = np.asarray(self.participation, float)
        if self.participation.shape != (n,) or np.any(self.participation < 0):
            raise ModelError("participation factors must be non-negative, one per bus")
        if abs(self.participation.sum() - 1.0) > 1e-9:
            raise ModelError("participation factors must sum to 1")
        for ln in self.lines:
            if not (0 <= ln.from_bus < n and 0 <= ln.to_bus < n) or ln.from_bus == ln.to_bus:
                raise ModelError(f"bad line endpoints {ln.from_bus}->{ln.to_bus}")
            if ln.admittance <= 0 or ln.capacity < 0:
                raise ModelError("admittances must be positive and capacities non-negative")
        self._build_flow_maps()

    @property
    def n_buses(self) -> int:
        return len(self.conv_capacity)

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @property
    def line_capacity(self) -> np.ndarray:
        return np.array([ln.capacity for ln in self.lines], float)

    @property
    def admittance(self) -> np.ndarray:
        return np.array([ln.admittance for ln in self.lines], float)

    @property
    def incidence(self) -> np.ndarray:
        """(lines, buses): -1 at the originating bus, +1 at the terminating bus."""
        c = np.zeros((self.n_lines, self.n_buses))
        for i, ln in enumerate(self.lines):
            c[i, ln.from_bus] = -1.0
            c[i, ln.to_bus] = 1.0
        return c

    def _build_flow_maps(self):
        n = self.n_buses
        c = self.incidence
        lap = c.T @ (self.admittance[:, None] * c)
        theta_map = np.zeros((n, n))
        if n > 1:
            red = lap[1:, 1:]
            if np.linalg.matrix_rank(red) < n - 1:
                raise ModelError("grid is not connected; angle system is singular")
            # injection = outflow - inflow = -lap @ theta, reference bus 0
            theta_map[1:, 1:] = -np.linalg.inv(red)
        self._theta_map = theta_map
        self._ptdf = self.admittance[:, None] * (c @ theta_map)

    def angles(self, injection) -> np.ndarray:
        return np.asarray(injection) @ self._theta_map.T

    def line_flows(self, injection) -> np.ndarray:
        return np.asarray(injection) @ self._ptdf.T

    def with_line_scale(self, factor: float) -> "GridModel":
        lines = [Line(l.from_bus, l.to_bus, l.admittance, l.capacity * factor) for l in self.lines]
        return GridModel(lines, self.conv_capacity, self.ren_capacity, self.demand,
                         self.participation, self.name)

    def with_demand(self, demand) -> "GridModel":
        return GridModel(self.lines, self.conv_capacity, self.ren_capacity, demand,
                         self.participation, self.name)

    # -- files --------------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "buses": [
                {"conv_capacity": float(p), "ren_capacity": float(r), "demand": float(d),
                 "participation": float(cg)}
                for p, r, d, cg in zip(self.conv_capacity, self.ren_capacity, self.demand, self.participation)
            ],
            "lines": [
                {"from": l.from_bus + 1, "to": l.to_bus + 1, "admittance": l.admittance, "capacity": l.capacity}
                for l in self.lines
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridModel":
        buses = d["buses"]
        part = [b.get("participation") for b in buses]
        lines = [Line(int(l["from"]) - 1, int(l["to"]) - 1, float(l["admittance"]), float(l["capacity"]))
                 for l in d["lines"]]
        return cls(
            lines,
            [float(b["conv_capacity"]) for b in buses],
            [float(b["ren_capacity"]) for b in buses],
            [float(b["demand"]) for b in buses],
            None if any(p is None for p in part) else part,
            d.get("name", ""),
        )

    @classmethod
    def load(cls, path) -> "GridModel":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def german_3bus() -> GridModel:
    """Bundled three-bus instance; demands are synthetic placeholders."""
    text = resources.files("cfi").joinpath("grid_de3.json").read_text()
    return GridModel.from_dict(json.loads(text))


@dataclass
class Schedule:
    p_set: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        self.p_set = np.asarray(self.p_set, float)
        self.p_max = np.asarray(self.p_max, float)
        self.p_ub, self.p_lb = bounds(self.p_set, self.p_max)


def bounds(p_set, p_max):
    """Generator window ``(P_ub, P_lb)`` around the setpoint."""
    p_set = np.asarray(p_set, float)
    p_max = np.asarray(p_max, float)
    if np.any(p_set < -1e-9) or np.any(p_set > p_max + 1e-9):
        raise ValueError("setpoint outside [0, P_max]")
    ub = np.minimum(p_set + RAMP_FRACTION * p_max, p_max)
    lb = np.maximum(0.0, p_set - RAMP_FRACTION * p_max)
    return ub, lb


def renewable_from_latent(flow, l, c, grid: GridModel) -> np.ndarray:
    cf = flow.forward(l, c)
    return np.maximum(0.0, cf) * grid.ren_capacity


def aggregate_feasible(schedule: Schedule, p_ren, p_dem):
    net = float(np.sum(np.asarray(p_dem) - np.asarray(p_ren)))
    slack_lo = net - float(np.sum(schedule.p_lb))
    slack_hi = float(np.sum(schedule.p_ub)) - net
    return (slack_lo >= 0.0 and slack_hi >= 0.0), slack_lo, slack_hi


@dataclass
class DispatchResult:
    p_gen: np.ndarray
    theta: np.ndarray
    p_line: np.ndarray
    delta_inj_inc: float
    balance_ok: bool


def generation(schedule: Schedule, participation, delta):
    return np.clip(schedule.p_set + participation * delta, schedule.p_lb, schedule.p_ub)


def solve_injection_shift(schedule: Schedule, participation, target: float, tol: float = 1e-10) -> float:
    """Bisection for ``sum(mid(P_lb, P_set + c*D, P_ub)) = target``.

    The bracket endpoints saturate every generator; when the root is a flat
    interval its midpoint is returned.
    """
    c = np.asarray(participation, float)
    active = c > 0
    lo = float(np.min((schedule.p_lb - schedule.p_set)[active] / c[active]))
    hi = float(np.max((schedule.p_ub - schedule.p_set)[active] / c[active]))

    def total(d):
        return float(np.sum(generation(schedule, c, d)))

    def bisect(pred):
        # smallest d in [lo, hi] with pred(d) true; pred monotone false -> true
        a, b = lo, hi
        scale = max(1.0, abs(a), abs(b))
        while b - a > tol * scale:
            mid = 0.5 * (a + b)
            if pred(mid):
                b = mid
            else:
                a = mid
        return 0.5 * (a + b)

    first = lo if total(lo) >= target else bisect(lambda d: total(d) >= target)
    last = hi if total(hi) <= target else bisect(lambda d: total(d) > target)
    return 0.5 * (first + last)


def dispatch(grid: GridModel, schedule: Schedule, p_ren) -> DispatchResult:
    p_ren = np.asarray(p_ren, float)
    ok, slack_lo, _ = aggregate_feasible(schedule, p_ren, grid.demand)
    n, nl = grid.n_buses, grid.n_lines
    if not ok:
        # balance cannot close: units sit at the violated window edge, lines carry nothing
        p_gen = schedule.p_lb.copy() if slack_lo < 0 else schedule.p_ub.copy()
        return DispatchResult(p_gen, np.zeros(n), np.zeros(nl), 0.0, False)
    target = float(np.sum(grid.demand - p_ren))
    d = solve_injection_shift(schedule, grid.participation, target)
    p_gen = generation(schedule, grid.participation, d)
    inj = p_gen + p_ren - grid.demand
    return DispatchResult(p_gen, grid.angles(inj), grid.line_flows(inj), d, True)


def constraint_g(grid: GridModel, schedule: Schedule, p_ren, result: DispatchResult | None = None) -> float:
    p_ren = np.asarray(p_ren, float)
    if result is None:
        result = dispatch(grid, schedule, p_ren)
    net = grid.demand - p_ren
    over = float(np.sum(schedule.p_lb - net))
    under = float(np.sum(net - schedule.p_ub))
    line = float(np.max(np.abs(result.p_line) - grid.line_capacity)) if grid.n_lines else -np.inf
    return max(over, under, line)


def nodal_residuals(grid: GridModel, p_ren, result: DispatchResult) -> np.ndarray:
    c = grid.incidence
    outflow = np.where(c < 0, 1.0, 0.0).T @ result.p_line
    inflow = np.where(c > 0, 1.0, 0.0).T @ result.p_line
    return grid.demand - np.asarray(p_ren) - result.p_gen - inflow + outflow


def evaluate_schedule(grid: GridModel, schedule: Schedule, cf, tol: float) -> bool:
    cf = np.asarray(cf, float)
    return constraint_g(grid, schedule, cf * grid.ren_capacity) <= tol


# -- vectorized path ---------------------------------------------------------

def batch_injection_shift(p_lb, p_set, p_ub, participation, target) -> np.ndarray:
    """Exact root of the piecewise-linear balance, vectorized over leading axes.

    ``p_lb``/``p_set``/``p_ub`` broadcast to ``(..., N)``; ``target`` to
    ``(...)``.  Between the smallest and largest breakpoint the aggregate
    output is strictly increasing, so the root is found by locating the
    segment and interpolating.  Targets outside the aggregate window are
    clamped to the nearest bracket end.
    """
    p_lb, p_set, p_ub = np.broadcast_arrays(p_lb, p_set, p_ub)
    c = np.asarray(participation, float)
    pos = c > 0
    inv = 1.0 / c if pos.all() else np.where(pos, 1.0 / np.where(pos, c, 1.0), 0.0)
    bp = np.sort(np.concatenate([(p_lb - p_set) * inv, (p_ub - p_set) * inv], axis=-1), axis=-1)  # (..., 2N)
    # np.clip carries noticeable overhead on the small arrays the solvers pass in
    gen = np.minimum(np.maximum(p_set[..., None, :] + c * bp[..., :, None], p_lb[..., None, :]), p_ub[..., None, :])
    s = gen.sum(axis=-1)  # (..., 2N)
    target = np.broadcast_to(np.asarray(target, float), s.shape[:-1])
    m = bp.shape[-1]
    j = np.minimum(np.maximum(np.count_nonzero(s < target[..., None], axis=-1), 1), m - 1)
    idx = j[..., None] + np.array([-1, 0])
    b0, b1 = np.moveaxis(np.take_along_axis(bp, idx, -1), -1, 0)
    s0, s1 = np.moveaxis(np.take_along_axis(s, idx, -1), -1, 0)
    ds = s1 - s0
    flat = ds <= 0
    frac = np.where(flat, 0.5, (target - s0) / np.where(flat, 1.0, ds))
    return b0 + np.minimum(np.maximum(frac, 0.0), 1.0) * (b1 - b0)


def batch_constraint_g(grid: GridModel, p_set, p_ren, with_parts: bool = False):
    """Constraint value for many (setpoint, renewable) pairs at once.

    ``p_set`` is ``(N,)`` or ``(..., N)``; ``p_ren`` is ``(..., N)``.
    """
    p_ren = np.asarray(p_ren, float)
    p_set = np.asarray(p_set, float)
    p_set = np.broadcast_to(p_set, np.broadcast_shapes(p_set.shape, p_ren.shape))
    p_max = grid.conv_capacity
    ub = np.minimum(p_set + RAMP_FRACTION * p_max, p_max)
    lb = np.maximum(0.0, p_set - RAMP_FRACTION * p_max)
    net = grid.demand - p_ren
    target = net.sum(axis=-1)
    over = lb.sum(axis=-1) - target
    under = target - ub.sum(axis=-1)
    ok = (over <= 0.0) & (under <= 0.0)
    d = batch_injection_shift(lb, p_set, ub, grid.participation, target)
    gen = np.minimum(np.maximum(p_set + grid.participation * d[..., None], lb), ub)
    inj = gen + p_ren - grid.demand
    flows = np.where(ok[..., None], grid.line_flows(inj), 0.0)
    line = np.max(np.abs(flows) - grid.line_capacity, axis=-1) if grid.n_lines else np.full(ok.shape, -np.inf)
    g = np.maximum(np.maximum(over, under), line)
    if with_parts:
        return g, {"over": over, "under": under, "line": line, "balance_ok": ok, "p_line": flows}
    return g
