"""Maximum-likelihood training: Adam, plateau LR schedule, early stopping."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .flow import ConditionalFlow

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    lr: float = 0.005
    scheduler_factor: float = 0.5
    scheduler_patience: int = 10
    earlystop_min_delta: float = 0.001
    earlystop_patience: int = 20
    grad_clip: float | None = 0.5
    batch_size: int = 8192
    max_epochs: int = 500
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.scheduler_patience < 1 or self.earlystop_patience < 1:
            raise ValueError("patiences must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ValueError("grad_clip must be positive")


class NonFiniteGradient(FloatingPointError):
    pass


class TrainingDiverged(RuntimeError):
    def __init__(self, message, snapshot: ConditionalFlow | None, history):
        super().__init__(message)
        self.snapshot = snapshot
        self.history = history


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params])


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient("non-finite gradient entry")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def clip_gradients(grads: list[np.ndarray], max_norm: float) -> list[np.ndarray]:
    if not max_norm > 0:
        raise ValueError("max_norm must be positive")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    return [g * factor for g in grads]


def nll_loss(flow: ConditionalFlow, y, c=None) -> float:
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("nll_loss needs a non-empty batch")
    return float(-np.mean(flow.log_prob(np.atleast_2d(y), c)))


def _batched_nll(flow, y, c, chunk=65536) -> float:
    total = 0.0
    for i in range(0, len(y), chunk):
        cc = None if c is None else c[i:i + chunk]
        total += -float(np.sum(flow.log_prob(y[i:i + chunk], cc)))
    return total / len(y)


@dataclass
class EpochRecord:
    epoch: int
    train_nll: float
    val_nll: float
    lr: float


@dataclass
class FitResult:
    flow: ConditionalFlow
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    stopped_early: bool = False

    def write_history(self, path) -> None:
        write_history(self.history, path)


def write_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_nll", "val_nll", "lr"])
        for r in history:
            w.writerow([r.epoch, f"{r.train_nll:.9g}", f"{r.val_nll:.9g}", f"{r.lr:.9g}"])


def fit(flow: ConditionalFlow, train, val, config: TrainConfig) -> FitResult:
    """Train ``flow`` (copied, not mutated) and return the best-validation snapshot.

    ``train`` / ``val`` are :class:`cfi.data.Dataset` objects (or anything with
    ``samples`` and ``contexts`` arrays).
    """
    flow = flow.copy()
    params = flow.parameters()
    state = AdamState.zeros_like(params)
    rng = np.random.default_rng(config.seed)
    y_tr, c_tr = np.asarray(train.samples, float), _ctx(train, flow)
    y_va, c_va = np.asarray(val.samples, float), _ctx(val, flow)
    n = len(y_tr)
    if n == 0 or len(y_va) == 0:
        raise ValueError("train and validation sets must be non-empty")

    lr = config.lr
    best = math.inf
    best_flow = flow.copy()
    best_epoch = -1
    sched_best, sched_bad = math.inf, 0
    es_best, es_wait = math.inf, 0
    history: list[EpochRecord] = []
    stopped = False

    for epoch in range(config.max_epochs):
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = flow.nll_and_grad(y_tr[idx], None if c_tr is None else c_tr[idx])
            if config.grad_clip is not None:
                grads = clip_gradients(grads, config.grad_clip)
            try:
                adam_step(state, params, grads, lr)
            except NonFiniteGradient:
                log.warning("epoch %d: non-finite gradient, aborting epoch", epoch)
                break
            total += loss * len(idx)
            seen += len(idx)
        train_nll = total / seen if seen else math.nan
        val_nll = _batched_nll(flow, y_va, c_va)
        history.append(EpochRecord(epoch, train_nll, val_nll, lr))
        if not math.isfinite(val_nll):
            raise TrainingDiverged(f"validation loss became {val_nll} at epoch {epoch}", best_flow, history)

        if val_nll < best:
            best, best_flow, best_epoch = val_nll, flow.copy(), epoch

        # plateau scheduler: any decrease counts as improvement
        if val_nll < sched_best:
            sched_best, sched_bad = val_nll, 0
        else:
            sched_bad += 1
            if sched_bad > config.scheduler_patience:
                lr *= config.scheduler_factor
                sched_bad = 0

        if val_nll < es_best - config.earlystop_min_delta:
            es_best, es_wait = val_nll, 0
        else:
            es_wait += 1
            if es_wait >= config.earlystop_patience:
                stopped = True
                break

    return FitResult(best_flow, history, best_epoch, stopped)


def _ctx(ds, flow):
    if flow.context_dim == 0:
        return None
    return np.asarray(ds.contexts, float).reshape(len(ds.samples), flow.context_dim)


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
