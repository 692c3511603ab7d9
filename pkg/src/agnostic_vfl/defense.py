"""Parameter-distortion defenses for the passive party.

The passive party discloses ``W_n`` instead of ``W_pas``.  Scores delivered to
the active party are still computed with the true parameters, so accuracy is
untouched; only the adversary's linear system is skewed.  How far ``W_n`` may
move is fixed by the interpretability gap ``g = ||W_pas - W_n||_F^2 / (d k)``.

Four regimes, chosen by the shapes of ``W_pas`` (k x d):

* ``i``   (d >= k): ``W_n = W_pas R``, R orthonormal, adversary uses half*.
* ``ii``  (1 < d < k): same rotation, adversary uses least squares.
* ``iii`` (d = 1): unrestricted ``w_n`` on the g = eps sphere, least squares.
* ``iv``  (k = 2, d > 1): unrestricted ``W_n``, half*.

All predicted MSEs assume the adversary holds exact scores.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, optimize

from .attack import build_J, pinv
from .stiefel import StiefelProblem, default_starts, feasibility_error, minimize

__all__ = [
    "PassiveStats",
    "PPSOutcome",
    "interpretability_gap",
    "rotation_gap",
    "applicable_case",
    "predicted_mse",
    "halfstar_mse_general",
    "ls_mse_general",
    "case_i_mse",
    "case_ii_mse",
    "case_iii_mse",
    "case_iv_mse",
    "case_i_problem",
    "case_ii_problem",
    "pps_case_i",
    "pps_case_ii",
    "pps_case_iii",
    "case_iii_closed_form",
    "pps_case_iv",
    "stationary_table",
    "solve",
    "pi_sweep",
    "simulate_attack_mse",
    "DEFAULT_LAMBDAS",
]

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = tuple(10.0 ** p for p in range(0, 9))
GAP_RTOL = 1e-2


@dataclass
class PassiveStats:
    """Moments of the passive features, as known to the passive party."""

    mu: np.ndarray
    K0: np.ndarray
    K_half1: np.ndarray
    n: int | None = None

    @property
    def d(self) -> int:
        return self.mu.shape[0]

    @property
    def M(self) -> np.ndarray:
        return np.outer(np.ones(self.d), self.mu - 0.25)

    @property
    def sigma2(self) -> float:
        if self.d != 1:
            raise ValueError("sigma2 is defined for a single passive feature")
        return float(self.K0[0, 0])

    @classmethod
    def from_features(cls, X: np.ndarray) -> "PassiveStats":
        X = np.atleast_2d(np.asarray(X, float))
        n = X.shape[0]
        Xc = X - 0.5
        return cls(X.mean(axis=0), X.T @ X / n, Xc.T @ Xc / n, n)

    @classmethod
    def from_moments(cls, mu: np.ndarray, K0: np.ndarray) -> "PassiveStats":
        mu = np.asarray(mu, float)
        one = np.ones_like(mu)
        K_half1 = K0 - 0.5 * (np.outer(mu, one) + np.outer(one, mu)) + 0.25 * np.outer(one, one)
        return cls(mu, np.asarray(K0, float), K_half1)

    def restrict(self, idx) -> "PassiveStats":
        idx = list(idx)
        return PassiveStats(self.mu[idx], self.K0[np.ix_(idx, idx)], self.K_half1[np.ix_(idx, idx)], self.n)


@dataclass
class PPSOutcome:
    W_n: np.ndarray
    g_achieved: float
    mse_predicted: float
    case: str
    epsilon: float
    status: str = "ok"  # "ok" | "constraint_unmet" | "infeasible"
    R: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.status == "ok"


def interpretability_gap(W_pas: np.ndarray, W_n: np.ndarray) -> float:
    W_pas = np.atleast_2d(W_pas)
    D = W_pas - np.atleast_2d(W_n)
    k, d = W_pas.shape
    return float(np.sum(D * D) / (d * k))


def rotation_gap(R: np.ndarray, W_pas: np.ndarray) -> float:
    """Gap of ``W_pas R`` for orthonormal R: ``2 Tr((I - R) W_pas^T W_pas) / (d k)``."""
    k, d = W_pas.shape
    Wg = W_pas.T @ W_pas
    return float(2.0 * np.trace((np.eye(d) - R) @ Wg) / (d * k))


def applicable_case(d: int, k: int) -> str:
    if d == 1:
        return "iii"
    if k == 2:
        return "iv"
    return "i" if d >= k else "ii"


# -- predicted attack MSE -------------------------------------------------------------


def halfstar_mse_general(A: np.ndarray, A_n: np.ndarray, stats: PassiveStats) -> float:
    """Exact-score half* MSE when the system is formed with ``A_n`` but ``b' = A x``."""
    d = A.shape[1]
    B = pinv(A_n)
    L = np.eye(d) - B @ A
    h = 0.5 * (np.eye(d) - B @ A_n).sum(axis=1)
    val = np.trace(L @ stats.K0 @ L.T) - 2.0 * h @ L @ stats.mu + h @ h
    return float(val / d)


def ls_mse_general(A: np.ndarray, A_n: np.ndarray, stats: PassiveStats) -> float:
    """Exact-score least-squares MSE when the system is formed with ``A_n``."""
    d = A.shape[1]
    L = np.eye(d) - pinv(A_n) @ A
    return float(np.trace(L @ stats.K0 @ L.T) / d)


def _projector(W_pas, J=None):
    J = build_J(W_pas.shape[0]) if J is None else J
    A = J @ W_pas
    return pinv(A) @ A


def _case_i_f(R, P, stats):
    K0, M = stats.K0, stats.M
    return float(np.trace(P @ (K0 - 2.0 * K0 @ R.T + R @ M @ R.T)) / stats.d)


def case_i_mse(R, W_pas, stats, J=None) -> float:
    P = _projector(W_pas, J)
    return float(np.trace(stats.K_half1) / stats.d) + _case_i_f(R, P, stats)


def case_ii_mse(R, stats) -> float:
    return float(2.0 * np.trace(stats.K0 - R @ stats.K0) / stats.d)


def case_iii_mse(w_pas, w_n, sigma2, J=None) -> float:
    w_pas, w_n = np.ravel(w_pas), np.ravel(w_n)
    J = build_J(len(w_pas)) if J is None else J
    a, an = J @ w_pas, J @ w_n
    nn = an @ an
    if nn == 0.0:
        return math.inf
    return float(sigma2 * (1.0 - an @ a / nn) ** 2)


def case_iv_mse(W_pas, W_n, stats, J=None) -> float:
    J = build_J(2) if J is None else J
    a = (J @ W_pas).ravel()
    an = (J @ W_n).ravel()
    nn = an @ an
    if nn == 0.0:
        return math.inf
    K0, M = stats.K0, stats.M
    num = a @ K0 @ a - 2.0 * a @ K0 @ an + an @ M @ an
    return float(np.trace(stats.K_half1) / stats.d + num / (stats.d * nn))


def predicted_mse(case, W_pas, W_n, stats: PassiveStats, R=None, J=None) -> float:
    """Case-dispatched attack MSE model.

    Cases i and ii use their rotation forms when ``R`` is supplied and the
    general formed-with-``A_n`` expressions otherwise.
    """
    W_pas = np.atleast_2d(W_pas)
    W_n = np.atleast_2d(W_n)
    if case == "i":
        if R is not None:
            return case_i_mse(R, W_pas, stats, J)
        J = build_J(W_pas.shape[0]) if J is None else J
        return halfstar_mse_general(J @ W_pas, J @ W_n, stats)
    if case == "ii":
        if R is not None:
            return case_ii_mse(R, stats)
        J = build_J(W_pas.shape[0]) if J is None else J
        return ls_mse_general(J @ W_pas, J @ W_n, stats)
    if case == "iii":
        return case_iii_mse(W_pas, W_n, stats.sigma2, J)
    if case == "iv":
        return case_iv_mse(W_pas, W_n, stats, J)
    raise ValueError(f"unknown case {case!r}")


# -- cases i and ii: orthonormal transforms --------------------------------------------


def _penalized(base, base_grad, W_pas, eps, lam):
    k, d = W_pas.shape
    Wg = W_pas.T @ W_pas
    scale = 2.0 / (d * k)

    def g(R):
        return scale * np.trace((np.eye(d) - R) @ Wg)

    def f(R):
        return base(R) + lam * (g(R) - eps) ** 2

    def grad(R):
        return base_grad(R) - 2.0 * lam * scale * (g(R) - eps) * Wg

    return f, grad


def case_i_problem(W_pas, stats: PassiveStats, J=None):
    """Objective ``-f(R)`` (negated attack-MSE surplus) and its Euclidean gradient."""
    P = _projector(W_pas, J)
    d = stats.d
    K0, MM = stats.K0, stats.M + stats.M.T

    def base(R):
        return -_case_i_f(R, P, stats)

    def grad(R):
        return -(-2.0 * P @ K0 + P @ R @ MM) / d

    return base, grad


def case_ii_problem(W_pas, stats: PassiveStats):
    d = stats.d
    K0 = stats.K0

    def base(R):
        return 2.0 * np.trace(R @ K0) / d

    def grad(R):
        return 2.0 * K0 / d

    return base, grad


def _rotation_pps(case, W_pas, stats, eps, mse_of_R, problem, lambdas, n_starts, max_iters, seed):
    W_pas = np.atleast_2d(np.asarray(W_pas, float))
    k, d = W_pas.shape
    if eps == 0:
        R = np.eye(d)
        return PPSOutcome(W_pas.copy(), 0.0, mse_of_R(R), case, 0.0, "ok", R)
    g_max = rotation_gap(-np.eye(d), W_pas)
    if eps > g_max * (1 + 1e-12):
        log.warning("case %s: eps=%g exceeds the largest reachable gap %g", case, eps, g_max)

    base, base_grad = problem
    candidates = []
    rng = np.random.default_rng(seed)
    for R0 in default_starts(d, n_starts, seed):
        # +-I are critical points of both the gap and symmetric-gradient
        # objectives, so descent would never leave them; nudge every start
        S = rng.normal(size=(d, d))
        R = R0 @ linalg.expm(0.05 * (S - S.T))
        stages = 0
        for lam in lambdas:
            f, grad = _penalized(base, base_grad, W_pas, eps, lam)
            res = minimize(StiefelProblem(d, f, grad, tolerance=1e-10, max_iters=max_iters), R)
            R = res.R
            stages += 1
            if abs(rotation_gap(R, W_pas) - eps) <= GAP_RTOL * eps:
                break
        gap = rotation_gap(R, W_pas)
        candidates.append((abs(gap - eps) <= GAP_RTOL * eps, base(R), abs(gap - eps), R, stages))

    ok = [c for c in candidates if c[0]]
    if ok:
        _, _, _, R, stages = min(ok, key=lambda c: c[1])
        status = "ok"
    else:
        _, _, _, R, stages = min(candidates, key=lambda c: c[2])
        status = "constraint_unmet"
    W_n = W_pas @ R
    return PPSOutcome(
        W_n, interpretability_gap(W_pas, W_n), mse_of_R(R), case, eps, status, R,
        {"feasibility": feasibility_error(R), "stages": stages, "g_max": g_max,
         "starts_ok": len(ok), "rotation_gap": rotation_gap(R, W_pas)},
    )


def pps_case_i(W_pas, stats: PassiveStats, eps: float, lambdas=DEFAULT_LAMBDAS,
               n_starts: int = 5, max_iters: int = 500, seed: int = 0, J=None) -> PPSOutcome:
    """Rotation maximizing the half* attack MSE at gap ``eps`` (needs d >= k)."""
    W_pas = np.atleast_2d(np.asarray(W_pas, float))
    k, d = W_pas.shape
    if d < k:
        raise ValueError(f"case i needs d >= k, got d={d}, k={k}")
    return _rotation_pps("i", W_pas, stats, eps, lambda R: case_i_mse(R, W_pas, stats, J),
                         case_i_problem(W_pas, stats, J), lambdas, n_starts, max_iters, seed)


def pps_case_ii(W_pas, stats: PassiveStats, eps: float, lambdas=DEFAULT_LAMBDAS,
                n_starts: int = 5, max_iters: int = 500, seed: int = 0) -> PPSOutcome:
    """Rotation maximizing the least-squares attack MSE at gap ``eps`` (1 < d < k)."""
    W_pas = np.atleast_2d(np.asarray(W_pas, float))
    k, d = W_pas.shape
    if not 1 < d < k:
        raise ValueError(f"case ii needs 1 < d < k, got d={d}, k={k}")
    return _rotation_pps("ii", W_pas, stats, eps, lambda R: case_ii_mse(R, stats),
                         case_ii_problem(W_pas, stats), lambdas, n_starts, max_iters, seed)


# -- case iii: one passive feature -------------------------------------------------------


def case_iii_closed_form(w_pas, sigma2: float, eps: float) -> tuple[np.ndarray, float]:
    """k = 2 maximizer: shift the two weights by -/+ sqrt(eps) in opposite directions.

    Valid while the shifted difference keeps its sign, i.e. ``2 sqrt(eps) <
    |w_1 - w_2|``; beyond that the objective has a pole on the circle.
    """
    w = np.ravel(np.asarray(w_pas, float))
    if w.shape != (2,):
        raise ValueError("closed form applies to k = 2")
    s = math.sqrt(eps)
    cands = [w + np.array([-s, s]), w + np.array([s, -s])]
    vals = [case_iii_mse(w, c, sigma2) for c in cands]
    i = int(np.argmax(vals))
    return cands[i], vals[i]


def _reduced_starts(A, Jp, r2, eps1, rng, n_random):
    """Points on the boundary ``|J+ (U - A)|^2 = r2`` of the reachable A_n set,
    plus reachable points on the floor sphere ``|U|^2 = eps1``, where the
    objectives blow up and the maximizer often sits."""
    m, d = A.shape
    dirs = [A, np.ones((m, d)), np.outer(np.ones(m), np.arange(d) + 1.0),
            np.outer((-1.0) ** np.arange(m), np.ones(d))]
    dirs = [s * v for v in dirs for s in (1.0, -1.0)]
    dirs += list(rng.normal(size=(n_random, m, d)))
    out = []
    for D in dirs:
        nq = np.linalg.norm(Jp @ D)
        if nq > 0:
            out.append(A + math.sqrt(r2) * D / nq)
            out.append(A + 0.5 * math.sqrt(r2) * D / nq)
        U = math.sqrt(eps1) * (1 + 1e-9) * D / np.linalg.norm(D)
        if np.sum((Jp @ (U - A)) ** 2) <= r2:
            out.append(U)
    return out


def _reduced_maximize(W_pas, eps, eps1, value, grad, rng, n_random):
    """Maximize ``value(A_n)`` over every A_n reachable at gap ``eps``, then lift.

    Adding the same vector to every row of ``W_n`` leaves ``A_n = J W_n``
    unchanged, so ``g(W_n) = eps`` is attainable exactly when the least
    change producing ``A_n``, namely ``J+ (A_n - A)``, has squared norm at most
    ``d k eps``.  The remainder of the budget goes into such a row-constant
    shift.  The search runs in the (k-1) x d space of ``A_n`` with the floor
    ``|A_n|^2 >= eps1`` as a second inequality.
    """
    k, d = W_pas.shape
    J = build_J(k)
    Jp = pinv(J)
    A = J @ W_pas
    r2 = d * k * eps
    shape = A.shape
    Q = Jp.T @ Jp

    def budget(u):
        D = u.reshape(shape) - A
        return r2 - float(np.sum((Jp @ D) ** 2))

    def budget_jac(u):
        return (-2.0 * Q @ (u.reshape(shape) - A)).ravel()

    cons = [
        optimize.NonlinearConstraint(budget, 0.0, np.inf, jac=budget_jac),
        optimize.NonlinearConstraint(lambda u: u @ u, eps1, np.inf, jac=lambda u: 2.0 * u),
    ]

    def neg(u):
        U = u.reshape(shape)
        return -value(U), -grad(U).ravel()

    def feasible(u):
        return u @ u >= eps1 * (1 - 1e-6) and budget(u) >= -1e-9 * max(r2, 1e-300)

    # wide SLSQP sweep, then a trust-region polish of the best point
    ineq = [{"type": "ineq", "fun": budget, "jac": budget_jac},
            {"type": "ineq", "fun": lambda u: u @ u - eps1, "jac": lambda u: 2.0 * u}]
    best = None
    for U0 in _reduced_starts(A, Jp, r2, eps1, rng, n_random):
        if np.sum(U0 ** 2) < eps1:
            continue
        res = optimize.minimize(neg, U0.ravel(), jac=True, method="SLSQP", constraints=ineq,
                                options={"maxiter": 300, "ftol": 1e-14})
        u = res.x
        if not feasible(u):
            continue
        val = value(u.reshape(shape))
        if best is None or val > best[0]:
            best = (val, u.reshape(shape))
    if best is not None:
        with warnings.catch_warnings():
            # BFGS reports zero curvature steps near the boundary; harmless here
            warnings.filterwarnings("ignore", message="delta_grad == 0.0")
            res = optimize.minimize(neg, best[1].ravel(), jac=True, method="trust-constr", constraints=cons,
                                    hess=optimize.BFGS(exception_strategy="skip_update"),
                                    options={"maxiter": 300, "gtol": 1e-12, "xtol": 1e-14})
        if feasible(res.x) and value(res.x.reshape(shape)) > best[0]:
            best = (value(res.x.reshape(shape)), res.x.reshape(shape))
    if best is None:
        return None
    U = best[1]
    step = Jp @ (U - A)
    rest = max(r2 - float(np.sum(step ** 2)), 0.0)
    shift = np.full(d, math.sqrt(rest / (k * d)))
    return W_pas + step + np.outer(np.ones(k), shift)


def pps_case_iii(w_pas, sigma2: float, eps: float, eps1: float | None = None,
                 n_random: int = 64, seed: int = 0) -> PPSOutcome:
    """Maximize ``sigma2 (1 - A_n.A / |A_n|^2)^2`` over ``w_n`` with ``g(w_n) = eps``.

    A multi-start search over the reachable ``A_n`` (see
    :func:`_reduced_maximize`); ``|A_n|^2 < eps1`` is
    excluded so that near-equal components cannot be returned.
    """
    w = np.ravel(np.asarray(w_pas, float))
    k = len(w)
    a = build_J(k) @ w
    eps1 = 1e-3 * float(a @ a) if eps1 is None else eps1
    W = w.reshape(k, 1)
    if eps == 0:
        return PPSOutcome(W.copy(), 0.0, 0.0, "iii", 0.0)

    def value(U):
        u = U.ravel()
        q = 1.0 - u @ a / (u @ u)
        return sigma2 * q * q

    def grad(U):
        u = U.ravel()
        nn = u @ u
        q = 1.0 - u @ a / nn
        dq = -(a / nn - 2.0 * (u @ a) * u / nn ** 2)
        return (2.0 * sigma2 * q * dq).reshape(U.shape)

    Wn = _reduced_maximize(W, eps, eps1, value, grad, np.random.default_rng(seed), n_random)
    if Wn is None:
        return PPSOutcome(W.copy(), 0.0, 0.0, "iii", eps, "constraint_unmet")
    return PPSOutcome(Wn, interpretability_gap(W, Wn), case_iii_mse(w, Wn, sigma2), "iii", eps,
                      diagnostics={"eps1": eps1})


# -- case iv: two classes, several passive features ---------------------------------------


def _iv_value(W_pas, stats):
    """Case-iv attack-MSE surplus over the exact half* baseline.

    Returned as a function of ``A_n`` (1 x d) together with its gradient.
    """
    a = (build_J(2) @ W_pas).ravel()
    K0, M = stats.K0, stats.M
    d = stats.d
    aK0 = a @ K0
    c0 = a @ K0 @ a
    MM = M + M.T

    def value(U):
        u = U.ravel()
        return (c0 - 2.0 * aK0 @ u + u @ M @ u) / (d * (u @ u))

    def grad(U):
        u = U.ravel()
        nn = u @ u
        num = c0 - 2.0 * aK0 @ u + u @ M @ u
        g = ((-2.0 * aK0 + MM @ u) * nn - num * 2.0 * u) / (d * nn * nn)
        return g.reshape(U.shape)

    return value, grad


def stationary_table(W_pas, stats: PassiveStats, lambdas, lambda1s) -> list[dict]:
    """Stationary points of the relaxed two-class problem over a multiplier grid.

    For each ``(lam, lam1)`` solve
    ``((M + M^T - 2 lam1 I) kron J^T J - lam I) vec(W_n) = vec(2 J^T A K0 - lam W_pas)``
    (column-stacked ``vec``) and record the gap and predicted MSE of the
    result.  Singular cells are skipped.
    """
    W_pas = np.atleast_2d(np.asarray(W_pas, float))
    d = W_pas.shape[1]
    J = build_J(2)
    JtJ = J.T @ J
    A = J @ W_pas
    MM = stats.M + stats.M.T
    rhs0 = 2.0 * J.T @ A @ stats.K0
    rows = []
    for l1 in lambda1s:
        base = np.kron(MM - 2.0 * l1 * np.eye(d), JtJ)
        for lam in lambdas:
            Wn = _stationary_point(base, rhs0, W_pas, lam)
            if Wn is None:
                continue
            rows.append({
                "lambda": float(lam), "lambda1": float(l1), "W_n": Wn,
                "g": interpretability_gap(W_pas, Wn),
                "norm2": float(((J @ Wn) ** 2).sum()),
                "mse": case_iv_mse(W_pas, Wn, stats),
            })
    return rows


def _stationary_point(base, rhs0, W_pas, lam):
    n = base.shape[0]
    K = base - lam * np.eye(n)
    rhs = (rhs0 - lam * W_pas).reshape(-1, order="F")
    try:
        if np.linalg.cond(K) > 1e12:
            return None
        v = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return None
    return v.reshape(W_pas.shape, order="F")


def _iv_from_table(W_pas, stats, eps, eps1, lambda1s, lambdas):
    """Refine table rows onto ``g = eps`` by root-finding in ``lam`` between grid cells."""
    d = W_pas.shape[1]
    J = build_J(2)
    MM = stats.M + stats.M.T
    rhs0 = 2.0 * J.T @ (J @ W_pas) @ stats.K0
    JtJ = J.T @ J
    best = None
    for l1 in lambda1s:
        base = np.kron(MM - 2.0 * l1 * np.eye(d), JtJ)

        def gap_minus_eps(lam):
            Wn = _stationary_point(base, rhs0, W_pas, lam)
            return math.nan if Wn is None else interpretability_gap(W_pas, Wn) - eps

        vals = [gap_minus_eps(lam) for lam in lambdas]
        for (l_a, v_a), (l_b, v_b) in zip(zip(lambdas, vals), zip(lambdas[1:], vals[1:])):
            if not (np.isfinite(v_a) and np.isfinite(v_b)) or v_a * v_b > 0:
                continue
            try:
                lam = optimize.brentq(gap_minus_eps, l_a, l_b, xtol=1e-14, rtol=1e-12)
            except (ValueError, RuntimeError):
                continue
            Wn = _stationary_point(base, rhs0, W_pas, lam)
            if Wn is None:
                continue
            an = J @ Wn
            if float((an ** 2).sum()) < eps1 or abs(interpretability_gap(W_pas, Wn) - eps) > 1e-6 * max(eps, 1e-300):
                continue
            mse = case_iv_mse(W_pas, Wn, stats)
            if best is None or mse > best[0]:
                best = (mse, Wn, lam, l1)
    return best


def pps_case_iv(W_pas, stats: PassiveStats, eps: float, eps1: float | None = None,
                lambdas=None, lambda1s=None, n_random: int = 64, seed: int = 0) -> PPSOutcome:
    """Two-class defense: the better of a direct constrained solve and the
    stationary-point lookup table, both with ``|A_n|^2 >= eps1``.
    """
    W_pas = np.atleast_2d(np.asarray(W_pas, float))
    k, d = W_pas.shape
    if k != 2 or d < 2:
        raise ValueError(f"case iv needs k = 2 and d > 1, got k={k}, d={d}")
    J = build_J(2)
    a = (J @ W_pas).ravel()
    eps1 = 1e-3 * float(a @ a) if eps1 is None else eps1
    if eps == 0:
        return PPSOutcome(W_pas.copy(), 0.0, case_iv_mse(W_pas, W_pas, stats), "iv", 0.0)

    # (a) direct solve over the reachable A_n
    value, grad = _iv_value(W_pas, stats)
    Wd = _reduced_maximize(W_pas, eps, eps1, value, grad, np.random.default_rng(seed), n_random)
    direct = None if Wd is None else (case_iv_mse(W_pas, Wd, stats), Wd)

    # (b) stationary family of the relaxed problem
    if lambdas is None:
        mag = np.logspace(-4, 4, 49)
        lambdas = np.concatenate([-mag[::-1], mag])
    if lambda1s is None:
        lambda1s = np.concatenate([[0.0], np.logspace(-3, 2, 11), -np.logspace(-3, 2, 11)])
    table = _iv_from_table(W_pas, stats, eps, eps1, list(lambda1s), list(lambdas))

    picks = []
    if direct is not None:
        picks.append((direct[0], direct[1], "direct"))
    if table is not None:
        picks.append((table[0], table[1], "table"))
    if not picks:
        return PPSOutcome(W_pas.copy(), 0.0, case_iv_mse(W_pas, W_pas, stats), "iv", eps, "constraint_unmet")
    val, Wn, src = max(picks, key=lambda p: p[0])
    return PPSOutcome(Wn, interpretability_gap(W_pas, Wn), val, "iv", eps, "ok",
                      diagnostics={"source": src, "eps1": eps1,
                                   "direct_mse": direct[0] if direct else None,
                                   "table_mse": table[0] if table else None})


# -- dispatch and sweeps --------------------------------------------------------------


def solve(case: str, W_pas, stats: PassiveStats, eps: float, **kw) -> PPSOutcome:
    W_pas = np.atleast_2d(np.asarray(W_pas, float))
    if case == "i":
        return pps_case_i(W_pas, stats, eps, **kw)
    if case == "ii":
        return pps_case_ii(W_pas, stats, eps, **kw)
    if case == "iii":
        return pps_case_iii(W_pas.ravel(), stats.sigma2, eps, **kw)
    if case == "iv":
        return pps_case_iv(W_pas, stats, eps, **kw)
    raise ValueError(f"unknown case {case!r}")


def pi_sweep(case: str, W_pas, stats: PassiveStats, eps_grid, **kw) -> list[tuple[float, float, float, str]]:
    """``(eps, g_achieved, mse_predicted, status)`` per grid point, sorted by eps."""
    rows = []
    for eps in sorted(float(e) for e in eps_grid):
        out = solve(case, W_pas, stats, eps, **kw)
        rows.append((eps, out.g_achieved, out.mse_predicted, out.status))
    return rows


def simulate_attack_mse(case: str, W_pas, W_n, X: np.ndarray, J=None) -> float:
    """Unclipped exact-score attack MSE on samples ``X`` for a disclosed ``W_n``.

    Exact scores make ``b' = J W_pas x``; the adversary solves with ``J W_n``.
    """
    W_pas = np.atleast_2d(W_pas)
    W_n = np.atleast_2d(W_n)
    J = build_J(W_pas.shape[0]) if J is None else J
    A, A_n = J @ W_pas, J @ W_n
    X = np.atleast_2d(X)
    B = X @ A.T
    Ap = pinv(A_n)
    d = A.shape[1]
    if case in ("i", "iv"):
        Xh = B @ Ap.T + 0.5 * (np.eye(d) - Ap @ A_n).sum(axis=1)
    else:
        Xh = B @ Ap.T
    return float(np.mean((X - Xh) ** 2))
