"""Synthetic tabular data with a controllable dependence structure.

Features come from a Gaussian copula: draw ``z ~ N(0, C)``, push each
coordinate through the standard normal CDF and then through the inverse CDF of
the requested marginal.  With uniform marginals the population moments are
available in closed form (:func:`uniform_copula_moments`), which the tests use
as ground truth.  Labels are drawn from a softmax teacher model.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .data import Dataset

__all__ = ["SyntheticSpec", "generate", "equicorrelation", "uniform_copula_moments"]


@dataclass
class SyntheticSpec:
    n: int = 5000
    d_t: int = 8
    k: int = 3
    rho: float = 0.0
    # "uniform" or {"dist": "beta", "a": .., "b": ..} per feature; one entry applies to all
    marginals: list = field(default_factory=lambda: ["uniform"])
    correlation: list | None = None  # explicit d_t x d_t Gaussian correlation, overrides rho
    signal: float = 6.0  # teacher logit scale; larger -> cleaner labels
    label_noise: float = 1.0  # Gumbel temperature; 0 -> argmax labels
    seed: int = 0

    @classmethod
    def from_json(cls, text: str) -> "SyntheticSpec":
        return cls(**json.loads(text))

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def equicorrelation(d: int, rho: float) -> np.ndarray:
    if not -1.0 / max(d - 1, 1) < rho < 1.0 and rho != 0.0:
        raise ValueError(f"equicorrelation rho={rho} not positive definite for d={d}")
    return (1.0 - rho) * np.eye(d) + rho * np.ones((d, d))


def _marginal(spec):
    if spec == "uniform":
        return stats.uniform()
    if isinstance(spec, dict) and spec.get("dist") == "beta":
        return stats.beta(spec["a"], spec["b"])
    raise ValueError(f"unsupported marginal {spec!r}")


def sample_features(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    corr = np.asarray(spec.correlation, float) if spec.correlation is not None else equicorrelation(spec.d_t, spec.rho)
    z = rng.multivariate_normal(np.zeros(spec.d_t), corr, size=spec.n, method="cholesky")
    u = stats.norm.cdf(z)
    margs = spec.marginals * spec.d_t if len(spec.marginals) == 1 else spec.marginals
    if len(margs) != spec.d_t:
        raise ValueError("marginals must have one entry or d_t entries")
    return np.column_stack([_marginal(m).ppf(u[:, j]) for j, m in enumerate(margs)])


def generate(spec: SyntheticSpec) -> Dataset:
    """Draw a labelled dataset; every class is guaranteed to occur."""
    rng = np.random.default_rng(spec.seed)
    x = sample_features(spec, rng)
    teacher = rng.normal(size=(spec.k, spec.d_t))
    logits = spec.signal * (x - x.mean(axis=0)) @ teacher.T
    if spec.label_noise > 0:
        logits = logits + spec.label_noise * rng.gumbel(size=logits.shape)
    labels = logits.argmax(axis=1)
    missing = set(range(spec.k)) - set(np.unique(labels).tolist())
    if missing:
        raise ValueError(f"synthetic labels miss classes {sorted(missing)}; change seed or signal")
    return Dataset(
        features=x,
        labels=labels.astype(np.int64),
        feature_names=[f"x{j}" for j in range(spec.d_t)],
        class_names=[str(c) for c in range(spec.k)],
    )


def uniform_copula_moments(corr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Population mean and second moment E[XX^T] for Uniform[0,1] marginals.

    The Pearson correlation of the uniforms is (6/pi) arcsin(r/2) for a Gaussian
    correlation r, and each uniform has variance 1/12.
    """
    corr = np.asarray(corr, float)
    d = corr.shape[0]
    r_u = (6.0 / np.pi) * np.arcsin(corr / 2.0)
    np.fill_diagonal(r_u, 1.0)
    mu = np.full(d, 0.5)
    return mu, r_u / 12.0 + np.outer(mu, mu)
