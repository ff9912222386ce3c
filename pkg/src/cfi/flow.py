"""Conditional RealNVP flow.

``forward`` maps latent points ``l`` to data ``y``; ``inverse`` maps back and
returns the log-determinant of the inverse Jacobian, which is what the
likelihood needs.  Data are pre-scaled as ``u = (y + shift) * scale`` before
the coupling blocks, so the forward map ends with the matching de-scaling and
the coverage of a latent ball is preserved in original data units.

Masks are selection matrices: a block keeps ``A_keep @ z`` and transforms
``A_tr @ z``.  The numeric path indexes directly (identical result); the
matrices are what :func:`export_graph` writes out.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nnet import ConfigurationError, Mlp, mlp_backward, mlp_forward

FORMAT_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def selection_matrix(idx, k: int) -> np.ndarray:
    a = np.zeros((len(idx), k))
    a[np.arange(len(idx)), idx] = 1.0
    return a


def _batch(x, width: int, name: str) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise ConfigurationError(f"{name} must have {width} columns, got shape {x.shape}")
    return x, squeeze


def _context(c, n: int, width: int) -> np.ndarray:
    if width == 0:
        return np.zeros((n, 0))
    if c is None:
        raise ConfigurationError(f"flow expects a context of {width} entries")
    c = np.asarray(c, dtype=np.float64)
    if c.ndim == 0:
        c = c.reshape(1)
    if c.ndim == 1:
        if c.shape[0] != width:
            raise ConfigurationError(f"context must have {width} entries, got {c.shape[0]}")
        return np.broadcast_to(c, (n, width))
    if c.shape != (n, width):
        raise ConfigurationError(f"context batch shape {c.shape} != {(n, width)}")
    return c


@dataclass
class CouplingBlock:
    keep_idx: np.ndarray
    transform_idx: np.ndarray
    conditioner: Mlp
    context_dim: int
    scale_bias: float = 0.001
    clip: tuple[float, float] = (0.0, 3.0)

    def __post_init__(self):
        self.keep_idx = np.asarray(self.keep_idx, dtype=int)
        self.transform_idx = np.asarray(self.transform_idx, dtype=int)
        k = self.k
        if sorted(np.concatenate([self.keep_idx, self.transform_idx]).tolist()) != list(range(k)):
            raise ConfigurationError("keep/transform indices must partition 0..k-1")
        if self.conditioner.in_dim != len(self.keep_idx) + self.context_dim:
            raise ConfigurationError("conditioner input width != kept dims + context dims")
        if self.conditioner.out_dim != 2 * len(self.transform_idx):
            raise ConfigurationError("conditioner must emit 2 values per transformed dim")

    @property
    def k(self) -> int:
        return len(self.keep_idx) + len(self.transform_idx)

    @property
    def keep_matrix(self) -> np.ndarray:
        return selection_matrix(self.keep_idx, self.k)

    @property
    def transform_matrix(self) -> np.ndarray:
        return selection_matrix(self.transform_idx, self.k)

    def scale_shift(self, z_keep, c):
        """Return ``(s, t, raw, pre_clip, cache)`` for kept coordinates ``z_keep``."""
        h = np.concatenate([z_keep, c], axis=1)
        out, cache = mlp_forward(self.conditioner, h)
        m = len(self.transform_idx)
        t, raw = out[:, :m], out[:, m:]
        pre = softplus(raw) + self.scale_bias
        s = np.clip(pre, *self.clip)
        return s, t, raw, pre, cache

    def forward(self, l, c):
        z_keep = l[:, self.keep_idx]
        s, t, *_ = self.scale_shift(z_keep, c)
        out = np.empty_like(l)
        out[:, self.keep_idx] = z_keep
        out[:, self.transform_idx] = l[:, self.transform_idx] * s + t
        return out, np.log(s).sum(axis=1)

    def inverse(self, y, c, keep_cache: bool = False):
        z_keep = y[:, self.keep_idx]
        s, t, raw, pre, mcache = self.scale_shift(z_keep, c)
        out = np.empty_like(y)
        out[:, self.keep_idx] = z_keep
        out[:, self.transform_idx] = (y[:, self.transform_idx] - t) / s
        logdet = -np.log(s).sum(axis=1)
        if keep_cache:
            return out, logdet, (y, out, s, raw, pre, mcache)
        return out, logdet

    def inverse_backward(self, cache, grad_out, grad_logdet):
        """Gradients of a scalar loss through :meth:`inverse`.

        ``grad_out`` is dLoss/d(inverse output), ``grad_logdet`` is
        dLoss/d(logdet) per row.  Returns dLoss/d(inverse input) and the
        conditioner parameter gradients.
        """
        y, out, s, raw, pre, mcache = cache
        gw_tr = grad_out[:, self.transform_idx]
        w_tr = out[:, self.transform_idx]
        gs = -(gw_tr * w_tr + grad_logdet[:, None]) / s
        gt = -gw_tr / s
        lo, hi = self.clip
        # clip passes gradient inside and on the boundary, zero outside
        graw = gs * ((pre >= lo) & (pre <= hi)) * sigmoid(raw)
        gh, pgrads = mlp_backward(self.conditioner, mcache, np.concatenate([gt, graw], axis=1))
        gin = np.empty_like(grad_out)
        gin[:, self.keep_idx] = grad_out[:, self.keep_idx] + gh[:, : len(self.keep_idx)]
        gin[:, self.transform_idx] = gw_tr / s
        return gin, pgrads

    def copy(self) -> "CouplingBlock":
        return CouplingBlock(self.keep_idx.copy(), self.transform_idx.copy(), self.conditioner.copy(),
                             self.context_dim, self.scale_bias, tuple(self.clip))


def half_split_masks(k: int, block_index: int) -> tuple[np.ndarray, np.ndarray]:
    """First ceil(k/2) coordinates kept in even blocks, transformed in odd ones."""
    first = np.arange((k + 1) // 2)
    second = np.arange((k + 1) // 2, k)
    return (first, second) if block_index % 2 == 0 else (second, first)


@dataclass
class ConditionalFlow:
    k: int
    context_dim: int
    blocks: list[CouplingBlock] = field(default_factory=list)
    shift: np.ndarray = None  # type: ignore[assignment]
    scale: float = 1.0

    def __post_init__(self):
        self.shift = np.zeros(self.k) if self.shift is None else np.asarray(self.shift, dtype=float).reshape(-1)
        if self.shift.shape != (self.k,):
            raise ConfigurationError(f"shift must have {self.k} entries")
        if not self.scale > 0:
            raise ConfigurationError("pre-scaling factor must be positive")
        for b in self.blocks:
            if b.k != self.k or b.context_dim != self.context_dim:
                raise ConfigurationError("block dimensions do not match the flow")

    @classmethod
    def init(cls, k: int, context_dim: int, n_blocks: int, hidden: int, rng,
             n_hidden_layers: int = 1, shift=None, scale: float = 1.0) -> "ConditionalFlow":
        blocks = []
        for i in range(n_blocks):
            keep, tr = half_split_masks(k, i)
            net = Mlp.init(len(keep) + context_dim, hidden, 2 * len(tr), n_hidden_layers, rng)
            blocks.append(CouplingBlock(keep, tr, net, context_dim))
        return cls(k, context_dim, blocks, shift, scale)

    # -- transforms -------------------------------------------------------
    def forward(self, l, c=None, return_logdet: bool = False):
        z, squeeze = _batch(l, self.k, "latent")
        cc = _context(c, z.shape[0], self.context_dim)
        logdet = np.zeros(z.shape[0])
        for block in self.blocks:
            z, ld = block.forward(z, cc)
            logdet += ld
        y = z / self.scale - self.shift
        logdet -= self.k * math.log(self.scale)
        if squeeze:
            y, logdet = y[0], logdet[0]
        return (y, logdet) if return_logdet else y

    def inverse(self, y, c=None, return_logdet: bool = False):
        u, squeeze = _batch(y, self.k, "data")
        cc = _context(c, u.shape[0], self.context_dim)
        u = (u + self.shift) * self.scale
        logdet = np.full(u.shape[0], self.k * math.log(self.scale))
        for block in reversed(self.blocks):
            u, ld = block.inverse(u, cc)
            logdet += ld
        if squeeze:
            u, logdet = u[0], logdet[0]
        return (u, logdet) if return_logdet else u

    def log_prob(self, y, c=None):
        l, logdet = self.inverse(y, c, return_logdet=True)
        l = np.asarray(l)
        return -0.5 * np.sum(l * l, axis=-1) - 0.5 * self.k * LOG_2PI + logdet

    def sample(self, n: int, c=None, rng=None) -> np.ndarray:
        if n < 0:
            raise ValueError("sample count must be non-negative")
        rng = np.random.default_rng(rng)
        if n == 0:
            return np.zeros((0, self.k))
        return self.forward(rng.standard_normal((n, self.k)), c)

    def nll_and_grad(self, y, c=None):
        """Mean negative log-likelihood of a batch and its parameter gradients."""
        u, _ = _batch(y, self.k, "data")
        n = u.shape[0]
        if n == 0:
            raise ValueError("empty batch")
        cc = _context(c, n, self.context_dim)
        u = (u + self.shift) * self.scale
        logdet = np.full(n, self.k * math.log(self.scale))
        caches = []
        for block in reversed(self.blocks):
            u, ld, cache = block.inverse(u, cc, keep_cache=True)
            logdet += ld
            caches.append(cache)
        caches.reverse()
        l = u
        loss = float(np.mean(0.5 * np.sum(l * l, axis=1) + 0.5 * self.k * LOG_2PI - logdet))
        g = l / n
        gld = np.full(n, -1.0 / n)
        grads: list[np.ndarray] = []
        per_block = []
        for block, cache in zip(self.blocks, caches):
            g, pg = block.inverse_backward(cache, g, gld)
            per_block.append(pg)
        for pg in per_block:
            grads.extend(pg)
        return loss, grads

    # -- parameters -------------------------------------------------------
    def parameters(self) -> list[np.ndarray]:
        out = []
        for b in self.blocks:
            out.extend(b.conditioner.parameters())
        return out

    def copy(self) -> "ConditionalFlow":
        return ConditionalFlow(self.k, self.context_dim, [b.copy() for b in self.blocks],
                               self.shift.copy(), self.scale)

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "k": self.k,
            "context_dim": self.context_dim,
            "preproc": {"shift": self.shift.tolist(), "scale": self.scale},
            "blocks": [
                {
                    "keep_idx": b.keep_idx.tolist(),
                    "layers": b.conditioner.to_dict(),
                    "scale_bias": b.scale_bias,
                    "clip": list(b.clip),
                }
                for b in self.blocks
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionalFlow":
        if d.get("version") != FORMAT_VERSION:
            raise ConfigurationError(f"unsupported flow file version {d.get('version')!r}")
        k, m = int(d["k"]), int(d["context_dim"])
        blocks = []
        for bd in d["blocks"]:
            keep = np.array(bd["keep_idx"], dtype=int)
            tr = np.array([i for i in range(k) if i not in set(keep.tolist())], dtype=int)
            blocks.append(CouplingBlock(keep, tr, Mlp.from_dict(bd["layers"]), m,
                                        float(bd["scale_bias"]), tuple(bd["clip"])))
        return cls(k, m, blocks, np.array(d["preproc"]["shift"], dtype=float), float(d["preproc"]["scale"]))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "ConditionalFlow":
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- constraint-graph export ---------------------------------------------

def export_graph(flow: ConditionalFlow) -> dict:
    """Flatten the forward map into a list of primitive operations.

    Every intermediate quantity becomes a named variable, so the graph can be
    embedded as constraints in a full-space optimization model.  Inputs of a
    node are concatenated in order; ``"name[a:b]"`` refers to a column slice.
    """
    k, m = flow.k, flow.context_dim
    vars_ = [{"name": "l", "shape": [k]}, {"name": "c", "shape": [m]}]
    nodes = []

    def var(name, size, bounds=None):
        entry = {"name": name, "shape": [size]}
        if bounds is not None:
            entry["bounds"] = list(bounds)
        vars_.append(entry)
        return name

    z = "l"
    for i, b in enumerate(flow.blocks):
        nk, nt = len(b.keep_idx), len(b.transform_idx)
        keep = var(f"b{i}_keep", nk)
        nodes.append({"op": "matmul", "inputs": [z], "output": keep,
                      "payload": {"W": b.keep_matrix.tolist()}})
        tr = var(f"b{i}_tr", nt)
        nodes.append({"op": "matmul", "inputs": [z], "output": tr,
                      "payload": {"W": b.transform_matrix.tolist()}})
        h_in = [keep, "c"] if m else [keep]
        n_layers = len(b.conditioner.layers)
        for j, layer in enumerate(b.conditioner.layers):
            pre = var(f"b{i}_h{j}_pre" if j < n_layers - 1 else f"b{i}_out", layer.out_dim)
            nodes.append({"op": "matmul", "inputs": h_in, "output": pre,
                          "payload": {"W": layer.weights.tolist(), "b": layer.bias.tolist()}})
            if j < n_layers - 1:
                act = var(f"b{i}_h{j}", layer.out_dim, (0.0, None))
                nodes.append({"op": "relu", "inputs": [pre], "output": act, "payload": {}})
                h_in = [act]
        out = f"b{i}_out"
        sp = var(f"b{i}_softplus", nt, (0.0, None))
        nodes.append({"op": "softplus", "inputs": [f"{out}[{nt}:{2 * nt}]"], "output": sp, "payload": {}})
        spb = var(f"b{i}_softplus_b", nt)
        nodes.append({"op": "add-const", "inputs": [sp], "output": spb, "payload": {"value": b.scale_bias}})
        s = var(f"b{i}_s", nt, b.clip)
        nodes.append({"op": "clip", "inputs": [spb], "output": s,
                      "payload": {"lo": b.clip[0], "hi": b.clip[1]}})
        ls = var(f"b{i}_tr_scaled", nt)
        nodes.append({"op": "elementwise-mul", "inputs": [tr, s], "output": ls, "payload": {}})
        trn = var(f"b{i}_tr_new", nt)
        nodes.append({"op": "add", "inputs": [ls, f"{out}[0:{nt}]"], "output": trn, "payload": {}})
        znew = var(f"z{i + 1}", k)
        nodes.append({"op": "scatter", "inputs": [keep, trn], "output": znew,
                      "payload": {"W": [b.keep_matrix.T.tolist(), b.transform_matrix.T.tolist()]}})
        z = znew
    var("y", k)
    nodes.append({"op": "affine", "inputs": [z], "output": "y",
                  "payload": {"scale": [1.0 / flow.scale] * k, "offset": (-flow.shift).tolist()}})
    return {"vars": vars_, "nodes": nodes}


def _fetch(env: dict, ref: str) -> np.ndarray:
    if "[" in ref:
        name, sl = ref[:-1].split("[")
        a, b = (int(v) for v in sl.split(":"))
        return env[name][:, a:b]
    return env[ref]


def evaluate_graph(graph: dict, l, c=None) -> np.ndarray:
    """Evaluate an exported graph on a batch of latent points."""
    l = np.atleast_2d(np.asarray(l, dtype=float))
    n = l.shape[0]
    m = next(v["shape"][0] for v in graph["vars"] if v["name"] == "c")
    env = {"l": l, "c": _context(c, n, m)}
    for node in graph["nodes"]:
        ins = [_fetch(env, r) for r in node["inputs"]]
        p = node["payload"]
        op = node["op"]
        if op == "matmul":
            x = np.concatenate(ins, axis=1)
            out = x @ np.asarray(p["W"]).T
            if "b" in p:
                out = out + np.asarray(p["b"])
        elif op == "relu":
            out = np.maximum(ins[0], 0.0)
        elif op == "softplus":
            out = softplus(ins[0])
        elif op == "add-const":
            out = ins[0] + p["value"]
        elif op == "clip":
            out = np.clip(ins[0], p["lo"], p["hi"])
        elif op == "elementwise-mul":
            out = ins[0] * ins[1]
        elif op == "add":
            out = ins[0] + ins[1]
        elif op == "scatter":
            out = sum(x @ np.asarray(w).T for x, w in zip(ins, p["W"]))
        elif op == "affine":
            out = ins[0] * np.asarray(p["scale"]) + np.asarray(p["offset"])
        else:
            raise ConfigurationError(f"unknown graph op {op!r}")
        env[node["output"]] = out
    return env["y"]
