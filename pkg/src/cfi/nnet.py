"""Small dense network with hand-written reverse-mode gradients.

The networks here are the conditioners inside the coupling blocks, so they
are tiny (a few dozen units) and evaluated on large batches.  Every routine
takes a 2-D batch ``(n, in_dim)``; a single vector is promoted to a batch of
one and demoted again on the way out.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class ConfigurationError(ValueError):
    """Raised on shape mismatches between networks, inputs and caches."""


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[0] != self.bias.shape[0]:
            raise ConfigurationError(
                f"weight rows {self.weights.shape} do not match bias length {self.bias.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ConfigurationError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Mlp:
    """Feed-forward net, ReLU after every layer except the last."""

    layers: list[DenseLayer] = field(default_factory=list)
    hidden_activation: str = "relu"

    def __post_init__(self):
        if not self.layers:
            raise ConfigurationError("an Mlp needs at least one layer")
        if self.hidden_activation != "relu":
            raise ConfigurationError(f"unsupported activation {self.hidden_activation!r}")
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ConfigurationError(
                    f"layer dims do not chain: {a.out_dim} -> {b.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @classmethod
    def init(cls, in_dim: int, hidden: int, out_dim: int, n_hidden_layers: int, rng) -> "Mlp":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) init for weights and biases."""
        dims = [in_dim] + [hidden] * n_hidden_layers + [out_dim]
        layers = []
        for fan_in, fan_out in zip(dims, dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            layers.append(
                DenseLayer(
                    rng.uniform(-bound, bound, size=(fan_out, fan_in)),
                    rng.uniform(-bound, bound, size=fan_out),
                )
            )
        return cls(layers)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.weights, layer.bias])
        return out

    def copy(self) -> "Mlp":
        return Mlp([DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.layers])

    def to_dict(self) -> list[dict]:
        return [{"W": l.weights.tolist(), "b": l.bias.tolist()} for l in self.layers]

    @classmethod
    def from_dict(cls, layers: list[dict]) -> "Mlp":
        return cls([DenseLayer(np.array(d["W"], dtype=float), np.array(d["b"], dtype=float)) for d in layers])


@dataclass
class MlpCache:
    inputs: list[np.ndarray]  # input to each layer, (n, in_i)
    preacts: list[np.ndarray]  # pre-activation of each layer, (n, out_i)
    squeeze: bool


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def mlp_forward(net: Mlp, x) -> tuple[np.ndarray, MlpCache]:
    x, squeeze = _as_batch(x)
    if x.shape[1] != net.in_dim:
        raise ConfigurationError(f"input has {x.shape[1]} features, net expects {net.in_dim}")
    inputs, preacts = [], []
    h = x
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        inputs.append(h)
        z = h @ layer.weights.T + layer.bias
        preacts.append(z)
        h = np.maximum(z, 0.0) if i < last else z
    out = h[0] if squeeze else h
    return out, MlpCache(inputs, preacts, squeeze)


def mlp_backward(net: Mlp, cache: MlpCache, output_grad) -> tuple[np.ndarray, list[np.ndarray]]:
    """Back-propagate ``output_grad`` (same shape as the forward output).

    Returns the input gradient and a flat list ``[dW0, db0, dW1, db1, ...]``
    summed over the batch, aligned with ``net.parameters()``.  The ReLU
    subgradient at exactly zero is taken as zero.
    """
    g, _ = _as_batch(output_grad)
    if len(cache.inputs) != len(net.layers):
        raise ConfigurationError("cache was produced by a different network")
    if g.shape != cache.preacts[-1].shape:
        raise ConfigurationError(f"output grad shape {g.shape} != {cache.preacts[-1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))  # type: ignore[list-item]
    last = len(net.layers) - 1
    for i in range(last, -1, -1):
        layer = net.layers[i]
        if cache.inputs[i].shape[1] != layer.in_dim:
            raise ConfigurationError("stale cache: layer input width changed")
        if i < last:
            g = g * (cache.preacts[i] > 0.0)
        grads[2 * i] = g.T @ cache.inputs[i]
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ layer.weights
    input_grad = g[0] if cache.squeeze else g
    return input_grad, grads
