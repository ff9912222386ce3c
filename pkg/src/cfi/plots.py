"""Deterministic SVG figures: set membership rasters, coverage bars, hourly shares."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .usets import HypercubeSet, LatentBall, membership  # noqa: E402

plt.rcParams["svg.hashsalt"] = "cfi"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def membership_raster(uset, extent, resolution: int, c=None):
    """Boolean (resolution, resolution) membership mask over ``extent``."""
    x0, x1, y0, y1 = extent
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    member, _ = membership(uset, pts, c)
    return xs, ys, member.reshape(resolution, resolution)


def _uset(r, flow):
    if r["kind"] == "ball":
        return LatentBall(r["delta"], flow)
    return HypercubeSet(np.asarray(r["center"], float), r["delta"])


def plot_sets(results, flow, samples, g, path, extent=None, resolution: int = 200) -> None:
    """One panel per result: member cells shaded, infeasible region hatched, samples dotted."""
    if extent is None:
        if samples is not None and len(samples):
            lo, hi = samples.samples.min(axis=0), samples.samples.max(axis=0)
            pad = 0.1 * (hi - lo)
            extent = (lo[0] - pad[0], hi[0] + pad[0], lo[1] - pad[1], hi[1] + pad[1])
        else:
            extent = (-3.0, 3.0, -3.0, 3.0)
    n = len(results)
    fig, axes = plt.subplots(1, n, figsize=(4.0 * n, 4.0), squeeze=False)
    for ax, r in zip(axes[0], results):
        c = r.get("context")
        xs, ys, mask = membership_raster(_uset(r, flow), extent, resolution, c)
        ax.contourf(xs, ys, mask.astype(float), levels=[0.5, 1.5], colors=["tab:blue"], alpha=0.35)
        if g is not None:
            X, Y = np.meshgrid(xs, ys)
            gv = g(np.column_stack([X.ravel(), Y.ravel()])).reshape(mask.shape)
            ax.contourf(xs, ys, gv, levels=[0.0, np.inf], colors=["tab:red"], alpha=0.25)
        if samples is not None and len(samples):
            sub = samples.where_context(c) if c is not None and samples.m else samples
            pts = sub.samples[:2000]
            ax.scatter(pts[:, 0], pts[:, 1], s=1, color="k", alpha=0.4)
        title = f"{r['kind']} delta={r['delta']:.3g}"
        if c is not None:
            title += f" c={','.join(f'{v:g}' for v in c)}"
        ax.set_title(title)
        ax.set_xlim(extent[0], extent[1])
        ax.set_ylim(extent[2], extent[3])
        ax.set_aspect("equal")
    fig.tight_layout()
    _save(fig, path)


def plot_coverage(rows, path) -> None:
    labels = [r["set_id"] for r in rows]
    ana = np.array([float(r["analytical"] or "nan") for r in rows])
    emp = np.array([float(r["empirical"] or "nan") for r in rows])
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(rows)), 3.5))
    ax.bar(x - 0.2, ana, 0.4, label="analytical")
    ax.bar(x + 0.2, emp, 0.4, label="empirical")
    ax.set_xticks(x, labels, rotation=60, ha="right")
    ax.set_ylabel("coverage")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def plot_hourly(rows, path) -> None:
    hourly = [r for r in rows if r["hour"].isdigit()]
    cols = [k for k in rows[0] if k.startswith("share_")]
    h = np.array([int(r["hour"]) for r in hourly])
    fig, ax = plt.subplots(figsize=(6.0, 3.5))
    for col in cols:
        v = np.array([float(r[col]) if r[col] else np.nan for r in hourly])
        ax.plot(h, v, marker="o", ms=3, label=col[len("share_"):])
    ax.set_xlabel("hour of day")
    ax.set_ylabel("feasible share")
    ax.set_ylim(0, 1.02)
    ax.set_xticks(range(0, 24, 3))
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)
