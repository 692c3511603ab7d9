"""First-order minimization over square orthonormal matrices ``R^T R = I``.

Steepest descent along the Riemannian gradient ``G - R G^T R`` with a QR
retraction and Armijo backtracking.  A QR retraction never leaves the
connected component of its starting point (``det R`` is preserved), so
:func:`default_starts` always includes starts of both determinant signs.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .attack import pinv

__all__ = [
    "StiefelProblem",
    "StiefelResult",
    "riemannian_grad",
    "retract",
    "minimize",
    "multistart",
    "default_starts",
    "svd_closed_form_ls",
    "feasibility_error",
]


@dataclass
class StiefelProblem:
    d: int
    objective: Callable[[np.ndarray], float]
    euclidean_grad: Callable[[np.ndarray], np.ndarray]
    tolerance: float = 1e-9
    max_iters: int = 5000


@dataclass
class StiefelResult:
    R: np.ndarray
    value: float
    iterations: int
    grad_norm: float
    status: str  # "converged" | "max_iters" | "stalled"


def feasibility_error(R: np.ndarray) -> float:
    return float(np.linalg.norm(R.T @ R - np.eye(R.shape[1])))


def riemannian_grad(R: np.ndarray, G: np.ndarray) -> np.ndarray:
    return G - R @ G.T @ R


def retract(R: np.ndarray, step: np.ndarray) -> np.ndarray:
    """Orthonormal QR factor of ``R - step`` with a positive triangular diagonal."""
    Q, T = np.linalg.qr(R - step)
    s = np.sign(np.diag(T))
    s[s == 0] = 1.0
    return Q * s


def minimize(
    p: StiefelProblem,
    R0: np.ndarray,
    c: float = 1e-4,
    shrink: float = 0.5,
    max_halvings: int = 60,
) -> StiefelResult:
    """Riemannian steepest descent with backtracking from a unit step."""
    R = np.array(R0, dtype=float)
    if feasibility_error(R) > 1e-8:
        raise ValueError("starting point is not orthonormal")
    f = p.objective(R)
    gnorm = np.inf
    for it in range(1, p.max_iters + 1):
        D = riemannian_grad(R, p.euclidean_grad(R))
        gnorm = float(np.linalg.norm(D))
        if gnorm <= p.tolerance:
            return StiefelResult(R, f, it, gnorm, "converged")
        g2 = gnorm * gnorm
        t = 1.0
        for _ in range(max_halvings):
            R_new = retract(R, t * D)
            f_new = p.objective(R_new)
            if f_new <= f - c * t * g2:
                break
            t *= shrink
        else:
            return StiefelResult(R, f, it, gnorm, "stalled")
        if not f_new < f:
            # step too small to change f in floating point
            return StiefelResult(R, f, it, gnorm, "stalled")
        R, f = R_new, f_new
    return StiefelResult(R, f, p.max_iters, gnorm, "max_iters")


def default_starts(d: int, n: int = 5, seed: int = 0) -> list[np.ndarray]:
    """I, -I, a reflection (det -1), then Haar-random orthogonal matrices.

    The random starts alternate between determinant +1 and -1 so that both
    components get random coverage whatever the seed.
    """
    starts = [np.eye(d), -np.eye(d)]
    refl = np.eye(d)
    refl[0, 0] = -1.0
    starts.append(refl)
    rng = np.random.default_rng(seed)
    sign = 1.0
    while len(starts) < n:
        Q, T = np.linalg.qr(rng.normal(size=(d, d)))
        Q = Q * np.sign(np.diag(T))
        if np.linalg.det(Q) * sign < 0:
            Q[:, 0] = -Q[:, 0]
        starts.append(Q)
        sign = -sign
    return starts[:n]


def multistart(p: StiefelProblem, starts: Sequence[np.ndarray], workers: int = 1) -> StiefelResult:
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(lambda R0: minimize(p, R0), starts))
    else:
        results = [minimize(p, R0) for R0 in starts]
    return min(results, key=lambda r: r.value)


def svd_closed_form_ls(A: np.ndarray, K0: np.ndarray) -> np.ndarray:
    """Minimizer ``-U V^T`` of ``Tr(R K0 A+ A)``, from the SVD of ``A+ A K0``."""
    P = pinv(A) @ np.asarray(A, float)
    U, _, Vt = np.linalg.svd(P @ K0)
    return -U @ Vt
