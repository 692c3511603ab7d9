"""Multinomial logistic regression trained with Adam and early stopping.

The same fitting loop (:func:`fit_adam`) is reused by the adversary models,
which only swap in a different loss.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Partition

__all__ = [
    "LRParams",
    "PartitionedModel",
    "TrainConfig",
    "TrainingDiverged",
    "softmax",
    "log_softmax",
    "confidence",
    "log_ratio",
    "cross_entropy",
    "cross_entropy_grad",
    "fit_adam",
    "train",
    "accuracy",
    "partition_params",
    "save_params",
    "load_params",
]

PROB_FLOOR = 1e-12


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite at epoch {epoch}")
        self.epoch = epoch


@dataclass
class LRParams:
    W: np.ndarray  # k x d_f
    b: np.ndarray  # k
    feature_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=float))
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.W.shape[0] != self.b.shape[0]:
            raise ValueError(f"W has {self.W.shape[0]} rows but b has {self.b.shape[0]} entries")

    @property
    def k(self) -> int:
        return self.W.shape[0]

    @property
    def d_f(self) -> int:
        return self.W.shape[1]

    def logits(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, float) @ self.W.T + self.b


@dataclass
class PartitionedModel:
    W_act: np.ndarray
    W_pas: np.ndarray
    b: np.ndarray
    partition: Partition

    @property
    def k(self) -> int:
        return self.b.shape[0]

    def reassemble(self) -> np.ndarray:
        d_t = self.W_act.shape[1] + self.W_pas.shape[1]
        W = np.empty((self.k, d_t))
        W[:, list(self.partition.active_indices)] = self.W_act
        W[:, list(self.partition.passive_indices)] = self.W_pas
        return W


@dataclass
class TrainConfig:
    lr: float = 1e-2
    max_epochs: int = 300
    patience: int = 10
    validation_fraction: float = 0.2
    batch_size: int = 256
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.max_epochs < 1 or self.patience < 1 or self.batch_size < 1:
            raise ValueError("lr, max_epochs, patience and batch_size must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, float)
    s = z - z.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def confidence(params: LRParams, x: np.ndarray) -> np.ndarray:
    """Score vector(s) ``softmax(W x + b)``; accepts one sample or a batch."""
    x = np.asarray(x, float)
    if x.shape[-1] != params.d_f:
        raise ValueError(f"expected {params.d_f} features, got {x.shape[-1]}")
    return softmax(params.logits(x))


def log_ratio(c: np.ndarray) -> np.ndarray:
    """``ln(c[m+1] / c[m])`` along the last axis, after flooring at 1e-12."""
    c = np.clip(np.asarray(c, float), PROB_FLOOR, 1.0)
    lc = np.log(c)
    return lc[..., 1:] - lc[..., :-1]


def cross_entropy(W: np.ndarray, b: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    lp = log_softmax(x @ W.T + b)
    return float(-lp[np.arange(len(y)), y].mean())


def cross_entropy_grad(W, b, x, y, weight: float = 1.0):
    """Gradient of ``weight * mean_i H(softmax(W x_i + b), y_i)``."""
    p = softmax(x @ W.T + b)
    p[np.arange(len(y)), y] -= 1.0
    p *= weight / len(y)
    return p.T @ x, p.sum(axis=0)


def fit_adam(
    shape: tuple[int, int],
    n_rows: int,
    batch_grad: Callable[[np.ndarray, np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]],
    monitor: Callable[[np.ndarray, np.ndarray], float],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Minibatch Adam from zero init; keeps the parameters with the best monitor value.

    ``batch_grad(idx, W, b)`` returns the gradient estimate for the rows in
    ``idx``; ``monitor(W, b)`` is evaluated after every epoch.
    Returns ``(W, b, epochs_run)``.
    """
    k, d = shape
    W, b = np.zeros((k, d)), np.zeros(k)
    mW, vW, mb, vb = np.zeros_like(W), np.zeros_like(W), np.zeros_like(b), np.zeros_like(b)
    best = monitor(W, b)
    best_W, best_b = W.copy(), b.copy()
    stale, t, epoch = 0, 0, 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n_rows)
        for start in range(0, n_rows, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            gW, gb = batch_grad(idx, W, b)
            t += 1
            mW = cfg.beta1 * mW + (1 - cfg.beta1) * gW
            vW = cfg.beta2 * vW + (1 - cfg.beta2) * gW * gW
            mb = cfg.beta1 * mb + (1 - cfg.beta1) * gb
            vb = cfg.beta2 * vb + (1 - cfg.beta2) * gb * gb
            c1, c2 = 1 - cfg.beta1 ** t, 1 - cfg.beta2 ** t
            W = W - cfg.lr * (mW / c1) / (np.sqrt(vW / c2) + cfg.eps)
            b = b - cfg.lr * (mb / c1) / (np.sqrt(vb / c2) + cfg.eps)
        loss = monitor(W, b)
        if not np.isfinite(loss) or not np.all(np.isfinite(W)):
            raise TrainingDiverged(epoch)
        if loss < best - 1e-9:
            best, best_W, best_b, stale = loss, W.copy(), b.copy(), 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best_W, best_b, epoch


def _holdout(n: int, cfg: TrainConfig, rng: np.random.Generator):
    n_val = int(round(cfg.validation_fraction * n))
    if n_val == 0 or n - n_val < 1:
        idx = np.arange(n)
        return idx, idx
    perm = rng.permutation(n)
    return perm[n_val:], perm[:n_val]


def train(
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig | None = None,
    k: int | None = None,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
    feature_indices: Sequence[int] | None = None,
) -> LRParams:
    """Unregularized softmax regression by minibatch Adam.

    Early stopping watches cross-entropy on ``validation`` if given, otherwise
    on a ``cfg.validation_fraction`` holdout carved from the inputs.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(features, float)
    y = np.asarray(labels, dtype=np.int64)
    k = k or int(y.max()) + 1
    if len(np.unique(y)) < 2:
        raise ValueError("need at least two classes to train")
    rng = np.random.default_rng(cfg.seed)
    if validation is None:
        tr, va = _holdout(len(y), cfg, rng)
        xv, yv = x[va], y[va]
        x, y = x[tr], y[tr]
    else:
        xv, yv = np.asarray(validation[0], float), np.asarray(validation[1], np.int64)

    W, b, _ = fit_adam(
        (k, x.shape[1]), len(y),
        lambda idx, W, b: cross_entropy_grad(W, b, x[idx], y[idx]),
        lambda W, b: cross_entropy(W, b, xv, yv),
        cfg, rng,
    )
    return LRParams(W, b, tuple(feature_indices) if feature_indices is not None else None)


def predict(params: LRParams, features: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(params.logits(features), axis=1)


def accuracy(params: LRParams, features: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(predict(params, features) == np.asarray(labels)))


def partition_params(params: LRParams, partition: Partition) -> PartitionedModel:
    if len(partition.passive_indices) + len(partition.active_indices) != params.d_f:
        raise ValueError("partition does not match the model's feature count")
    return PartitionedModel(
        W_act=params.W[:, list(partition.active_indices)].copy(),
        W_pas=params.W[:, list(partition.passive_indices)].copy(),
        b=params.b.copy(),
        partition=partition,
    )


def params_to_dict(params: LRParams) -> dict:
    return {
        "k": params.k,
        "d_f": params.d_f,
        "W": params.W.reshape(-1).tolist(),
        "b": params.b.tolist(),
        "feature_indices": list(params.feature_indices) if params.feature_indices is not None else None,
    }


def params_from_dict(doc: dict) -> LRParams:
    k, d = int(doc["k"]), int(doc["d_f"])
    W = np.asarray(doc["W"], float).reshape(k, d)
    fi = doc.get("feature_indices")
    return LRParams(W, np.asarray(doc["b"], float), tuple(fi) if fi is not None else None)


def save_params(params: LRParams, path) -> None:
    with open(path, "w") as fh:
        json.dump(params_to_dict(params), fh)


def load_params(path) -> LRParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh))
