import numpy as np
import pytest

from agnostic_vfl.attack import pinv
from agnostic_vfl.defense import PassiveStats, _penalized, case_i_problem, case_ii_problem
from agnostic_vfl.stiefel import (
    StiefelProblem, default_starts, feasibility_error, minimize, multistart,
    retract, riemannian_grad, svd_closed_form_ls,
)


def _haar(rng, d):
    Q, T = np.linalg.qr(rng.normal(size=(d, d)))
    return Q * np.sign(np.diag(T))


def _tangent_projector(R):
    """Orthogonal projector onto {R Omega : Omega skew}, built from a basis."""
    d = R.shape[0]
    basis = []
    for i in range(d):
        for j in range(i + 1, d):
            S = np.zeros((d, d))
            S[i, j], S[j, i] = 1.0, -1.0
            basis.append((R @ S).ravel())
    B = np.array(basis).T
    return B @ np.linalg.pinv(B)


def _psd(rng, d):
    G = rng.normal(size=(d, d))
    return G @ G.T / d + 0.1 * np.eye(d)


def test_riemannian_grad_examples(rng):
    R = _haar(rng, 4)
    np.testing.assert_allclose(riemannian_grad(R, R), 0.0, atol=1e-12)
    G = rng.normal(size=(4, 4))
    G = G + G.T
    np.testing.assert_allclose(riemannian_grad(np.eye(4), G), 0.0, atol=1e-12)


def test_riemannian_grad_is_scaled_tangent_projection(rng):
    for _ in range(10):
        R = _haar(rng, 3)
        G = rng.normal(size=(3, 3))
        P = _tangent_projector(R)
        np.testing.assert_allclose(riemannian_grad(R, G).ravel(), 2.0 * P @ G.ravel(), atol=1e-10)


def test_retract_properties(rng):
    R = _haar(rng, 5)
    np.testing.assert_allclose(retract(R, np.zeros((5, 5))), R, atol=1e-12)
    assert feasibility_error(retract(R, rng.normal(size=(5, 5)))) <= 1e-10
    D = riemannian_grad(R, rng.normal(size=(5, 5)))
    errs = [np.linalg.norm(retract(R, t * D) - (R - t * D)) for t in (1e-2, 1e-3)]
    assert errs[1] <= errs[0] / 50  # quadratic: 100x smaller for 10x shorter steps


def _ls_problem(A, K0, tol=1e-12):
    P = pinv(A) @ A
    return StiefelProblem(K0.shape[0], lambda R: float(np.trace(R @ K0 @ P)), lambda R: (K0 @ P).T,
                          tolerance=tol, max_iters=20000)


def test_minimize_matches_svd_closed_form(rng):
    for _ in range(10):
        d = int(rng.integers(2, 6))
        A, K0 = rng.normal(size=(d + 1, d)), _psd(rng, d)
        R_star = svd_closed_form_ls(A, K0)
        target = -np.linalg.svd(pinv(A) @ A @ K0, compute_uv=False).sum()
        p = _ls_problem(A, K0)
        assert p.objective(R_star) == pytest.approx(target, abs=1e-9)
        res = multistart(p, default_starts(d, 5, seed=1))
        assert res.value - target <= 1e-6
        assert feasibility_error(res.R) <= 1e-8


def test_svd_closed_form_identity():
    A = np.eye(3)
    np.testing.assert_allclose(svd_closed_form_ls(A, np.eye(3)), -np.eye(3), atol=1e-12)


def test_minimize_recovers_minus_identity(rng):
    for _ in range(10):
        d = int(rng.integers(2, 5))
        K0 = _psd(rng, d)
        p = StiefelProblem(d, lambda R: 2 * np.trace(R @ K0) / d, lambda R: 2 * K0 / d, 1e-12, 20000)
        res = multistart(p, default_starts(d, 5, seed=2))
        assert np.linalg.norm(res.R + np.eye(d)) <= 1e-4


def test_constant_objective_returns_start(rng):
    R0 = _haar(rng, 3)
    res = minimize(StiefelProblem(3, lambda R: 1.0, lambda R: np.zeros((3, 3))), R0)
    assert res.iterations == 1 and res.status == "converged"
    np.testing.assert_array_equal(res.R, R0)


def test_minimize_rejects_infeasible_start():
    with pytest.raises(ValueError):
        minimize(StiefelProblem(2, lambda R: 0.0, lambda R: R), 2 * np.eye(2))


def test_monotone_and_feasible_iterates(rng):
    d = 4
    A, K0 = rng.normal(size=(5, d)), _psd(rng, d)
    base = _ls_problem(A, K0)
    values, feas = [], []

    def obj(R):
        return base.objective(R)

    def grad(R):
        values.append(obj(R))
        feas.append(feasibility_error(R))
        return base.euclidean_grad(R)

    minimize(StiefelProblem(d, obj, grad, 1e-10, 500), _haar(rng, d))
    assert max(feas) <= 1e-8
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))


def test_default_starts_cover_both_components():
    dets = {round(float(np.linalg.det(R))) for R in default_starts(4, 5)}
    assert dets == {-1, 1}
    for seed in range(10):
        random_dets = [round(float(np.linalg.det(R))) for R in default_starts(2, 7, seed)[3:]]
        assert random_dets == [1, -1, 1, -1]


def _fd_check(f, grad, R, rng):
    G = grad(R)
    E = rng.normal(size=R.shape)
    h = 1e-6
    num = (f(R + h * E) - f(R - h * E)) / (2 * h)
    assert np.sum(G * E) == pytest.approx(num, rel=1e-4, abs=1e-9)


def test_registered_problem_gradients(rng):
    d, k = 4, 3
    X = rng.random((200, d))
    stats = PassiveStats.from_features(X)
    W_pas = rng.normal(size=(k, d))
    R0 = _haar(rng, d)
    f, g = case_i_problem(W_pas, stats)
    _fd_check(f, g, R0, rng)
    f, g = case_ii_problem(W_pas[:, :2], PassiveStats.from_features(X[:, :2]))
    _fd_check(f, g, _haar(rng, 2), rng)
    f, g = _penalized(lambda R: 0.0, lambda R: np.zeros((d, d)), W_pas, 0.05, 3.0)
    _fd_check(f, g, R0, rng)
    A = rng.normal(size=(5, d))
    p = _ls_problem(A, stats.K0)
    _fd_check(p.objective, p.euclidean_grad, R0, rng)


def test_gradient_lipschitz_bounds(rng):
    d, k = 4, 3
    stats = PassiveStats.from_features(rng.random((100, d)))
    W_pas = rng.normal(size=(k, d))
    Wg = W_pas.T @ W_pas
    _, grad_f = case_i_problem(W_pas, stats)
    A = np.diff(np.eye(k), axis=0) @ W_pas
    MM = stats.M + stats.M.T
    k_half = np.linalg.norm(pinv(A) @ A) * np.linalg.norm(MM)
    _, grad_p = _penalized(lambda R: 0.0, lambda R: np.zeros((d, d)), W_pas, 0.1, 1.0)
    # chain factors (4/dk)(2/dk) around the trace bound |Tr(D W)| <= |D| |W|
    k_g = 8.0 / (d * k) ** 2 * np.linalg.norm(Wg) ** 2
    for _ in range(100):
        R1, R2 = _haar(rng, d), _haar(rng, d)
        dist = np.linalg.norm(R1 - R2)
        assert np.linalg.norm(grad_f(R1) - grad_f(R2)) <= k_half / d * dist + 1e-12
        assert np.linalg.norm(grad_p(R1) - grad_p(R2)) <= k_g * dist + 1e-12
