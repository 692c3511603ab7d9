"""Adversary models trained by the active party on its own features.

``train_am`` fits plain logistic regression on the active slice.  ``train_ram``
additionally fits prediction-phase observations: exact scores through the
squared log-ratio mismatch, or class labels through an extra cross-entropy term.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .model import (
    PROB_FLOOR,
    LRParams,
    TrainConfig,
    _holdout,
    confidence,
    cross_entropy,
    cross_entropy_grad,
    fit_adam,
    log_ratio,
    log_softmax,
    train,
)

__all__ = [
    "Observed",
    "RamConfig",
    "score_mismatch",
    "ram_objective",
    "train_am",
    "train_ram",
    "estimate_score",
    "save_observed",
    "load_observed",
]


@dataclass
class Observed:
    """Prediction-phase samples seen by the active party.

    ``y`` holds active features (n_p x d_a); ``c`` the delivered scores
    (n_p x k) and/or ``u`` the delivered class labels.
    """

    y: np.ndarray
    c: np.ndarray | None = None
    u: np.ndarray | None = None

    def __post_init__(self):
        self.y = np.atleast_2d(np.asarray(self.y, float))
        if self.c is not None:
            self.c = np.atleast_2d(np.asarray(self.c, float))
        if self.u is not None:
            self.u = np.asarray(self.u, dtype=np.int64).reshape(-1)

    def __len__(self):
        return 0 if self.y.size == 0 else self.y.shape[0]

    @classmethod
    def empty(cls, d_a: int) -> "Observed":
        return cls(np.zeros((0, d_a)))

    def as_labels(self) -> "Observed":
        """Keep only argmax labels, as when scores arrive noisy or rounded."""
        u = self.u if self.u is not None else np.argmax(self.c, axis=1)
        return Observed(self.y, None, u)


@dataclass
class RamConfig:
    alpha: float = 1.0
    beta: float = 0.0
    observed: Observed | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        obs = self.observed
        if obs is not None and len(obs):
            if self.alpha > 0 and obs.c is None:
                raise ValueError("alpha > 0 needs observed scores")
            if self.beta > 0 and obs.u is None:
                raise ValueError("beta > 0 needs observed labels")

    @classmethod
    def for_scores(cls, observed: Observed, train_cfg: TrainConfig | None = None) -> "RamConfig":
        return cls(1.0, 0.0, observed, train_cfg or TrainConfig())

    @classmethod
    def for_labels(cls, observed: Observed, train_cfg: TrainConfig | None = None) -> "RamConfig":
        return cls(0.0, 1.0, observed.as_labels(), train_cfg or TrainConfig())


def score_mismatch(c_hat: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Sum over classes of ``log^2(c_hat / c)``; zero iff the vectors agree."""
    a = np.log(np.clip(c_hat, PROB_FLOOR, 1.0))
    b = np.log(np.clip(c, PROB_FLOOR, 1.0))
    return ((a - b) ** 2).sum(axis=-1)


def _mismatch_terms(W, b, y, c):
    """Mean mismatch over observed rows and its gradient; uses log-softmax directly."""
    z = y @ W.T + b
    lp = log_softmax(z)
    r = lp - np.log(np.clip(c, PROB_FLOOR, 1.0))
    p = np.exp(lp)
    g = 2.0 * (r - p * r.sum(axis=1, keepdims=True)) / len(y)
    return float((r ** 2).sum(axis=1).mean()), g.T @ y, g.sum(axis=0)


def ram_objective(W, b, y_t, u_t, obs: Observed, alpha: float, beta: float) -> float:
    n_t, n_p = len(u_t), len(obs)
    if n_p == 0:
        return cross_entropy(W, b, y_t, u_t)
    val = n_t * cross_entropy(W, b, y_t, u_t)
    if beta > 0:
        val += beta * n_p * cross_entropy(W, b, obs.y, obs.u)
    val /= n_t + n_p
    if alpha > 0:
        val += alpha * _mismatch_terms(W, b, obs.y, obs.c)[0]
    return float(val)


def train_am(
    train_active: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig | None = None,
    k: int | None = None,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> LRParams:
    return train(train_active, labels, cfg, k=k, validation=validation)


def train_ram(
    cfg: RamConfig,
    train_active: np.ndarray,
    labels: np.ndarray,
    k: int | None = None,
    validation: tuple[np.ndarray, np.ndarray] | None = None,
) -> LRParams:
    """Refined adversary model.

    Minimizes ``(sum_t H + beta * sum_p H) / (n_t + n_p) + alpha * mean_p S``.
    Minibatches are drawn from the training rows; the observed rows, being few,
    enter every step in full.  With no observations this is exactly
    :func:`train_am` under the same seed.
    """
    obs = cfg.observed
    if obs is None or len(obs) == 0:
        return train_am(train_active, labels, cfg.train, k=k, validation=validation)
    tc = cfg.train
    x = np.asarray(train_active, float)
    y = np.asarray(labels, np.int64)
    k = k or int(y.max()) + 1
    rng = np.random.default_rng(tc.seed)
    if validation is None:
        tr, va = _holdout(len(y), tc, rng)
        xv, yv = x[va], y[va]
        x, y = x[tr], y[tr]
    else:
        xv, yv = np.asarray(validation[0], float), np.asarray(validation[1], np.int64)
    n_t, n_p = len(y), len(obs)
    w_t = n_t / (n_t + n_p)
    alpha, beta = cfg.alpha, cfg.beta

    def obs_grad(W, b):
        gW, gb = np.zeros_like(W), np.zeros_like(b)
        if beta > 0:
            a, c = cross_entropy_grad(W, b, obs.y, obs.u, weight=beta * n_p / (n_t + n_p))
            gW += a
            gb += c
        if alpha > 0:
            _, a, c = _mismatch_terms(W, b, obs.y, obs.c)
            gW += alpha * a
            gb += alpha * c
        return gW, gb

    def batch_grad(idx, W, b):
        gW, gb = cross_entropy_grad(W, b, x[idx], y[idx], weight=w_t)
        oW, ob = obs_grad(W, b)
        return gW + oW, gb + ob

    def monitor(W, b):
        val = w_t * cross_entropy(W, b, xv, yv)
        if beta > 0:
            val += beta * n_p / (n_t + n_p) * cross_entropy(W, b, obs.y, obs.u)
        if alpha > 0:
            val += alpha * _mismatch_terms(W, b, obs.y, obs.c)[0]
        return val

    W, b, _ = fit_adam((k, x.shape[1]), n_t, batch_grad, monitor, tc, rng)
    return LRParams(W, b)


def estimate_score(am: LRParams, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Adversary's score estimate and its log-ratio vector."""
    c_hat = confidence(am, y)
    return c_hat, log_ratio(c_hat)


def observed_to_json(obs: Observed) -> list[dict]:
    out = []
    for i in range(len(obs)):
        row = {"y": obs.y[i].tolist()}
        if obs.c is not None:
            row["c"] = obs.c[i].tolist()
        if obs.u is not None:
            row["u"] = int(obs.u[i])
        out.append(row)
    return out


def observed_from_json(rows: list[dict]) -> Observed:
    if not rows:
        raise ValueError("empty observation list; use Observed.empty(d_a)")
    y = np.array([r["y"] for r in rows], float)
    c = np.array([r["c"] for r in rows], float) if all("c" in r for r in rows) else None
    u = np.array([r["u"] for r in rows]) if all("u" in r for r in rows) else None
    if c is None and u is None:
        raise ValueError("every observation needs a score 'c' or a label 'u'")
    return Observed(y, c, u)


def save_observed(obs: Observed, path) -> None:
    with open(path, "w") as fh:
        json.dump(observed_to_json(obs), fh)


def load_observed(path) -> Observed:
    with open(path) as fh:
        return observed_from_json(json.load(fh))
