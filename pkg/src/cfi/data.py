"""Datasets: two-moons, annulus, capacity factors and their contexts."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np


class IngestionError(ValueError):
    pass


@dataclass
class Dataset:
    samples: np.ndarray  # (n, k)
    contexts: np.ndarray  # (n, m), m may be 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        self.contexts = np.asarray(self.contexts, dtype=float).reshape(len(self.samples), -1)
        if not (np.all(np.isfinite(self.samples)) and np.all(np.isfinite(self.contexts))):
            raise ValueError("dataset entries must be finite")

    def __len__(self):
        return len(self.samples)

    @property
    def k(self) -> int:
        return self.samples.shape[1]

    @property
    def m(self) -> int:
        return self.contexts.shape[1]

    def subset(self, idx) -> "Dataset":
        return Dataset(self.samples[idx], self.contexts[idx], dict(self.meta))

    def where_context(self, c, atol=1e-12) -> "Dataset":
        mask = np.all(np.abs(self.contexts - np.asarray(c, float)) <= atol, axis=1)
        return self.subset(np.flatnonzero(mask))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"y{i + 1}" for i in range(self.k)] + [f"c{j + 1}" for j in range(self.m)])
            for y, c in zip(self.samples, self.contexts):
                w.writerow([f"{v:.9g}" for v in y] + [f"{v:.9g}" for v in c])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise IngestionError(f"{path}: empty file")
        if len(rows) == 1:
            raise IngestionError(f"{path}: header but no rows")
        header = rows[0]
        ky = [i for i, h in enumerate(header) if h.startswith("y")]
        kc = [i for i, h in enumerate(header) if h.startswith("c")]
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
        except ValueError as exc:
            raise IngestionError(f"{path}: {exc}") from None
        return cls(data[:, ky], data[:, kc])


# -- synthetic benchmarks ------------------------------------------------

def gen_two_moons(n: int, noise: float = 0.1, scale: float = 4.0, shift=(-2.7, -0.85), rng=None) -> Dataset:
    """Classic two interleaving half circles; moon A has context 0, moon B context 1."""
    if n < 2:
        raise ValueError("two-moons needs n >= 2")
    rng = np.random.default_rng(rng)
    n_a = n // 2
    n_b = n - n_a
    ta = np.linspace(0.0, math.pi, n_a)
    tb = np.linspace(0.0, math.pi, n_b)
    a = np.column_stack([np.cos(ta), np.sin(ta)])
    b = np.column_stack([1.0 - np.cos(tb), 1.0 - np.sin(tb) - 0.5])
    y = np.vstack([a, b])
    c = np.concatenate([np.zeros(n_a), np.ones(n_b)])
    if noise > 0:
        y = y + rng.normal(scale=noise, size=y.shape)
    y = y * scale + np.asarray(shift, float)
    perm = rng.permutation(n)
    return Dataset(y[perm], c[perm, None], {"name": "two-moons"})


def gen_annulus(n: int, noise: float = 0.1, rng=None) -> Dataset:
    """Outer circle of the 'circles' benchmark (unit radius), single context 0."""
    if n < 1:
        raise ValueError("annulus needs n >= 1")
    rng = np.random.default_rng(rng)
    t = rng.uniform(0.0, 2.0 * math.pi, size=n)
    y = np.column_stack([np.cos(t), np.sin(t)])
    if noise > 0:
        y = y + rng.normal(scale=noise, size=y.shape)
    return Dataset(y, np.zeros((n, 1)), {"name": "annulus"})


# -- capacity factors ----------------------------------------------------

@dataclass
class CapacityFactorTable:
    timestamps: np.ndarray  # datetime64[s]
    cf: np.ndarray  # (n, buses)

    def __len__(self):
        return len(self.timestamps)

    @property
    def n_buses(self) -> int:
        return self.cf.shape[1]

    @property
    def hours(self) -> np.ndarray:
        ts = self.timestamps.astype("datetime64[h]")
        return (ts - ts.astype("datetime64[D]")).astype(int)

    @property
    def days_of_year(self) -> np.ndarray:
        d = self.timestamps.astype("datetime64[D]")
        return (d - d.astype("datetime64[Y]")).astype(int) + 1

    def slice(self, start: int, stop: int) -> "CapacityFactorTable":
        return CapacityFactorTable(self.timestamps[start:stop], self.cf[start:stop])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["timestamp"] + [f"cf_bus{i + 1}" for i in range(self.n_buses)])
            for ts, row in zip(self.timestamps, self.cf):
                w.writerow([str(ts.astype("datetime64[s]"))] + [f"{v:.6f}" for v in row])


def load_capacity_factors(path) -> CapacityFactorTable:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "timestamp" or len(header) < 2:
            raise IngestionError(f"{path}:1: header must be 'timestamp,cf_bus1,...'")
        n_bus = len(header) - 1
        ts, rows = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n_bus + 1:
                raise IngestionError(f"{path}:{lineno}: expected {n_bus + 1} fields, got {len(row)}")
            try:
                t = np.datetime64(row[0].strip().replace("Z", ""), "s")
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
            for v in vals:
                if not (-0.05 <= v <= 1.05):
                    raise IngestionError(f"{path}:{lineno}: capacity factor {v} outside [0, 1]")
            if ts and t <= ts[-1]:
                raise IngestionError(f"{path}:{lineno}: timestamps must be strictly increasing")
            ts.append(t)
            rows.append(vals)
    cf = np.clip(np.array(rows, dtype=float).reshape(-1, n_bus), 0.0, 1.0)
    return CapacityFactorTable(np.array(ts, dtype="datetime64[s]"), cf)


def solar_bell(hour) -> np.ndarray:
    """Clear-sky shape: zero at night, peak 1 at noon, daylight 6..18."""
    hour = np.asarray(hour, float)
    x = np.sin(math.pi * (hour - 6.0) / 12.0)
    return np.where((hour > 6.0) & (hour < 18.0), np.maximum(x, 0.0), 0.0) ** 1.5


def gen_synthetic_cf(n_days: int, n_buses: int = 3, rng=None, start: str = "2018-01-01",
                     solar_share=None, wind_phi: float = 0.97, wind_sigma: float = 0.03,
                     noise: float = 0.005) -> CapacityFactorTable:
    """Hourly capacity factors with a diurnal solar ramp and persistent wind.

    Per bus: ``share * solar_bell(hour) * season(day) * cloud(day)
    + (1 - share) * wind`` plus white noise, clamped to [0, 1].  Wind is an
    AR(1) process around a seasonal mean, shared in part between buses.
    """
    if n_days < 1:
        raise ValueError("n_days must be >= 1")
    rng = np.random.default_rng(rng)
    n = 24 * n_days
    t0 = np.datetime64(start, "h")
    ts = (t0 + np.arange(n)).astype("datetime64[s]")
    hours = np.arange(n) % 24
    doy = ((ts.astype("datetime64[D]") - ts.astype("datetime64[Y]")).astype(int) + 1).astype(float)
    if solar_share is None:
        solar_share = np.linspace(0.35, 0.65, n_buses)
    solar_share = np.broadcast_to(np.asarray(solar_share, float), (n_buses,))
    season = 0.75 - 0.25 * np.cos(2.0 * math.pi * (doy - 172.0) / 365.0 + math.pi)
    cloud = np.repeat(rng.uniform(0.6, 1.0, size=(n_days, n_buses)), 24, axis=0)
    solar = solar_bell(hours)[:, None] * season[:, None] * cloud

    wind_mean = 0.25 + 0.08 * np.cos(2.0 * math.pi * (doy - 15.0) / 365.0)
    dev = np.zeros((n, n_buses))
    common = np.zeros(n)
    e = rng.normal(size=(n, n_buses))
    ec = rng.normal(size=n)
    for i in range(1, n):
        common[i] = wind_phi * common[i - 1] + wind_sigma * ec[i]
        dev[i] = wind_phi * dev[i - 1] + 0.5 * wind_sigma * e[i]
    wind = np.clip(wind_mean[:, None] + common[:, None] + dev, 0.0, 1.0)

    cf = solar_share * solar + (1.0 - solar_share) * wind + noise * rng.normal(size=(n, n_buses))
    return CapacityFactorTable(ts, np.clip(cf, 0.0, 1.0))


class ContextMode(str, Enum):
    PREV = "PREV"
    PREV_T = "PREV_T"
    PREV_TD = "PREV_TD"


def time_encoding(value, period: float) -> tuple[np.ndarray, np.ndarray]:
    a = 2.0 * math.pi * np.asarray(value, float) / period
    return np.sin(a), np.cos(a)


def context_features(prev_cf, hour, day, mode) -> np.ndarray:
    """Context rows for given previous capacity factors, hour of day and day of year."""
    mode = ContextMode(mode)
    prev_cf = np.atleast_2d(np.asarray(prev_cf, float))
    cols = [prev_cf]
    if mode in (ContextMode.PREV_T, ContextMode.PREV_TD):
        cols.extend(c[:, None] for c in time_encoding(np.broadcast_to(hour, len(prev_cf)), 24.0))
    if mode == ContextMode.PREV_TD:
        day = np.minimum(np.broadcast_to(day, len(prev_cf)), 365)
        cols.extend(c[:, None] for c in time_encoding(day, 365.0))
    return np.hstack(cols)


def build_contexts(table: CapacityFactorTable, mode) -> Dataset:
    if len(table) < 2:
        raise ValueError("need at least two rows to build previous-step contexts")
    mode = ContextMode(mode)
    ctx = context_features(table.cf[:-1], table.hours[1:], table.days_of_year[1:], mode)
    return Dataset(table.cf[1:].copy(), ctx,
                   {"mode": mode.value, "timestamps": table.timestamps[1:]})


def scale_shift(ds: Dataset, shift: float = -0.5, scale: float = 6.0) -> Dataset:
    return Dataset((ds.samples + shift) * scale, ds.contexts.copy(), dict(ds.meta))


def inverse_scale_shift(ds: Dataset, shift: float = -0.5, scale: float = 6.0) -> Dataset:
    return Dataset(ds.samples / scale - shift, ds.contexts.copy(), dict(ds.meta))


def split(ds: Dataset, val_frac: float = 0.15, rng=None) -> tuple[Dataset, Dataset]:
    if not 0.0 < val_frac < 1.0:
        raise ValueError("val_frac must be in (0, 1)")
    rng = np.random.default_rng(rng)
    perm = rng.permutation(len(ds))
    n_val = int(math.floor(len(ds) * val_frac))
    return ds.subset(np.sort(perm[n_val:])), ds.subset(np.sort(perm[:n_val]))
