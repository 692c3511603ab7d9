"""Feature reconstruction from the linear system ``A x = b'``.

With ``z = W_act y + W_pas x + b`` and ``c = softmax(z)``, the log-ratio
vector ``c' = J z`` gives ``J W_pas x = c' - J W_act y - J b``.  When
``d < k`` the system is overdetermined and solved by least squares; otherwise
half* picks the solution closest to the centre of the unit box.

Every estimator accepts ``b'`` as one vector or as a batch of rows.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

__all__ = [
    "RankDeficientError",
    "AttackSystem",
    "build_J",
    "form_system",
    "pinv",
    "ls_estimate",
    "halfstar_estimate",
    "estimate",
    "clip_to_box",
    "empirical_mse",
    "gap_stats",
    "analytic_mse_ls",
    "analytic_mse_halfstar",
]

PINV_RCOND = 1e-10


class RankDeficientError(np.linalg.LinAlgError):
    def __init__(self, rank: int, d: int):
        super().__init__(f"attack matrix has numerical rank {rank} < {d} unknowns")
        self.rank = rank


@dataclass
class AttackSystem:
    A: np.ndarray        # (k-1) x d
    b_prime: np.ndarray  # (k-1,) or (n, k-1)

    @property
    def d(self) -> int:
        return self.A.shape[1]


def build_J(k: int) -> np.ndarray:
    """(k-1) x k difference operator: row m is -1 at m and +1 at m+1."""
    if k < 2:
        raise ValueError(f"need k >= 2 classes, got {k}")
    J = np.zeros((k - 1, k))
    i = np.arange(k - 1)
    J[i, i] = -1.0
    J[i, i + 1] = 1.0
    return J


def form_system(W_act, W_pas, b, y, c_prime, J: np.ndarray | None = None) -> AttackSystem:
    """Build ``A = J W_pas`` and ``b' = c' - J W_act y - J b``.

    ``W_pas`` is whatever passive matrix the adversary holds; under a defense it
    is the distorted ``W_n``.  A custom ``J`` (e.g. ``T @ build_J(k)``) must
    come with ``c'`` expressed in the same basis.
    """
    W_act = np.atleast_2d(np.asarray(W_act, float))
    W_pas = np.atleast_2d(np.asarray(W_pas, float))
    b = np.asarray(b, float)
    J = build_J(len(b)) if J is None else np.asarray(J, float)
    y = np.asarray(y, float)
    if W_act.shape[1] == 0:
        active = J @ b
    else:
        active = y @ (J @ W_act).T + J @ b
    return AttackSystem(J @ W_pas, np.asarray(c_prime, float) - active)


def pinv(A: np.ndarray) -> np.ndarray:
    """Moore-Penrose pseudoinverse by SVD, cutting singular values below 1e-10 * s_max."""
    return np.linalg.pinv(np.asarray(A, float), rcond=PINV_RCOND)


def ls_estimate(sys: AttackSystem, rtol: float = 1e-10) -> np.ndarray:
    """Least-squares solution via a QR factorization of ``A``."""
    A = np.asarray(sys.A, float)
    m, d = A.shape
    if d > m:
        raise RankDeficientError(m, d)
    Q, R = linalg.qr(A, mode="economic")
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rtol * max(diag.max(initial=0.0), np.finfo(float).tiny)))
    if rank < d:
        raise RankDeficientError(rank, d)
    rhs = np.asarray(sys.b_prime, float) @ Q  # rows are Q^T b'
    return linalg.solve_triangular(R, rhs.T).T


def halfstar_estimate(sys: AttackSystem) -> np.ndarray:
    """``A+ b' + (I - A+ A) 1/2``: the solution nearest the box centre."""
    A = np.asarray(sys.A, float)
    Ap = pinv(A)
    centre = 0.5 * (np.eye(A.shape[1]) - Ap @ A).sum(axis=1)
    return np.asarray(sys.b_prime, float) @ Ap.T + centre


def estimate(sys: AttackSystem, k: int) -> np.ndarray:
    """Least squares when ``d < k``, half* otherwise."""
    return ls_estimate(sys) if sys.d < k else halfstar_estimate(sys)


def clip_to_box(x_hat: np.ndarray) -> np.ndarray:
    """Send out-of-range components to the nearer of 0 and 1."""
    return np.clip(x_hat, 0.0, 1.0)


def empirical_mse(x_true: np.ndarray, x_hat: np.ndarray) -> float:
    """Mean squared error per feature, ``sum ||x - x_hat||^2 / (N d)``."""
    x_true = np.atleast_2d(x_true)
    x_hat = np.atleast_2d(x_hat)
    if x_true.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {x_true.shape} vs {x_hat.shape}")
    return float(np.mean((x_true - x_hat) ** 2))


def gap_stats(c_prime: np.ndarray, c_hat_prime: np.ndarray) -> np.ndarray:
    """Empirical second moment of the score gaps ``c_hat' - c'``."""
    g = np.atleast_2d(np.asarray(c_hat_prime, float) - np.asarray(c_prime, float))
    if g.shape[0] == 0:
        raise ValueError("gap_stats needs at least one pair")
    return g.T @ g / g.shape[0]


def analytic_mse_ls(A: np.ndarray, K_cc: np.ndarray) -> float:
    """``Tr(A (A^T A)^-2 A^T K) / d`` for the least-squares attack."""
    A = np.asarray(A, float)
    H = A @ np.linalg.inv(A.T @ A)
    return float(np.trace(H @ H.T @ K_cc) / A.shape[1])


def analytic_mse_halfstar(A: np.ndarray, K_half1: np.ndarray, K_cc: np.ndarray) -> float:
    """Exact-score half* error plus the score-gap term ``Tr(A+^T A+ K) / d``."""
    A = np.asarray(A, float)
    d = A.shape[1]
    Ap = pinv(A)
    first = np.trace((np.eye(d) - Ap @ A) @ K_half1)
    second = np.trace(Ap.T @ Ap @ K_cc)
    return float((first + second) / d)
