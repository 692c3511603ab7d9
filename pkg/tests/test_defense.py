import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from agnostic_vfl import defense as D
from agnostic_vfl.attack import build_J, pinv
from agnostic_vfl.stiefel import StiefelProblem, default_starts, feasibility_error, multistart
from agnostic_vfl.synthetic import equicorrelation, uniform_copula_moments



def _haar(rng, d):
    Q, T = np.linalg.qr(rng.normal(size=(d, d)))
    return Q * np.sign(np.diag(T))


def _stats(rng, d, n=2000):
    return D.PassiveStats.from_features(rng.random((n, d)) ** 1.5)


def test_passive_stats_invariants(rng):
    X = rng.random((500, 3))
    s = D.PassiveStats.from_features(X)
    m = D.PassiveStats.from_moments(s.mu, s.K0)
    np.testing.assert_allclose(s.K_half1, m.K_half1, atol=1e-10)
    for K in (s.K0, s.K_half1):
        np.testing.assert_allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-12
    assert np.linalg.matrix_rank(s.M) <= 1
    assert D.PassiveStats.from_features(X[:, :1]).sigma2 == pytest.approx(np.mean(X[:, 0] ** 2))
    with pytest.raises(ValueError):
        s.sigma2
    r = s.restrict([2, 0])
    np.testing.assert_array_equal(r.K0, s.K0[np.ix_([2, 0], [2, 0])])


def test_gap_examples(rng):
    W = rng.normal(size=(3, 4))
    assert D.interpretability_gap(W, W) == 0.0
    Wn = W.copy()
    Wn[0, 0] += math.sqrt(12)
    assert D.interpretability_gap(W, Wn) == pytest.approx(1.0)
    for _ in range(10):
        R = _haar(rng, 4)
        assert D.interpretability_gap(W, W @ R) == pytest.approx(D.rotation_gap(R, W), abs=1e-10)


def test_applicable_case():
    assert [D.applicable_case(d, k) for d, k in [(1, 5), (3, 2), (4, 3), (2, 5)]] == ["iii", "iv", "i", "ii"]


# -- case ii -----------------------------------------------------------------------


def test_case_ii_unconstrained_is_minus_identity():
    mu, K0 = np.full(2, 0.5), np.eye(2) / 12 + 0.25  # i.i.d. uniform
    s = D.PassiveStats.from_moments(mu, K0)
    base, grad = D.case_ii_problem(np.ones((4, 2)), s)
    res = multistart(StiefelProblem(2, base, grad, 1e-12, 5000), default_starts(2))
    assert np.linalg.norm(res.R + np.eye(2)) <= 1e-4
    assert D.case_ii_mse(-np.eye(2), s) == pytest.approx(4 / 3)
    assert D.predicted_mse("ii", np.ones((4, 2)), -np.ones((4, 2)), s, R=-np.eye(2)) == pytest.approx(
        4 / 2 * np.trace(K0))


def test_case_ii_eps_zero(rng):
    W = rng.normal(size=(4, 2))
    out = D.pps_case_ii(W, _stats(rng, 2), 0.0)
    np.testing.assert_array_equal(out.R, np.eye(2))
    assert out.mse_predicted == 0.0


@pytest.mark.parametrize("case,k,d", [("i", 3, 4), ("ii", 5, 3)])
def test_rotation_outcome_contract(rng, case, k, d):
    W = rng.normal(size=(k, d))
    s = _stats(rng, d)
    out = D.solve(case, W, s, 0.05)
    assert out.success
    assert abs(out.g_achieved - 0.05) <= 0.05 * 1e-2
    assert feasibility_error(out.R) <= 1e-8
    assert abs(D.rotation_gap(out.R, W) - D.interpretability_gap(W, out.W_n)) <= 1e-9
    np.testing.assert_allclose(out.W_n, W @ out.R)


def test_case_i_eps_zero_gives_exact_halfstar(rng):
    W = rng.normal(size=(3, 4))
    s = _stats(rng, 4)
    out = D.pps_case_i(W, s, 0.0)
    A = build_J(3) @ W
    baseline = np.trace((np.eye(4) - pinv(A) @ A) @ s.K_half1) / 4
    assert out.mse_predicted == pytest.approx(baseline, abs=1e-12)


def test_case_i_requires_d_ge_k(rng):
    with pytest.raises(ValueError):
        D.pps_case_i(rng.normal(size=(4, 2)), _stats(rng, 2), 0.1)
    with pytest.raises(ValueError):
        D.pps_case_ii(rng.normal(size=(2, 4)), _stats(rng, 4), 0.1)


def test_unreachable_eps_is_flagged(rng):
    W = 0.01 * rng.normal(size=(5, 2))
    out = D.pps_case_ii(W, _stats(rng, 2), 10.0, n_starts=3)
    assert out.status == "constraint_unmet"


# -- case iii ----------------------------------------------------------------------


def test_case_iii_worked_example():
    out = D.pps_case_iii(np.array([1.0, 0.0]), 1 / 3, 0.04)
    assert out.mse_predicted == pytest.approx(4 / 27, abs=1e-6)
    wn = out.W_n.ravel()
    # any common shift leaves the attack unchanged; compare the difference
    assert wn[1] - wn[0] == pytest.approx(-0.6, abs=1e-6)
    w, v = D.case_iii_closed_form(np.array([1.0, 0.0]), 1 / 3, 0.04)
    np.testing.assert_allclose(w, [0.8, 0.2])
    assert v == pytest.approx(4 / 27)


def test_case_iii_common_shift_is_harmless():
    w = np.array([0.3, -0.7, 1.1])
    assert D.case_iii_mse(w, w + 0.25, 0.4) == pytest.approx(0.0, abs=1e-15)


def test_case_iii_eps_zero():
    out = D.pps_case_iii(np.array([0.2, 0.9, -0.3]), 0.3, 0.0)
    assert out.mse_predicted == 0.0
    np.testing.assert_array_equal(out.W_n.ravel(), [0.2, 0.9, -0.3])


def test_case_iii_equal_components_rejected():
    assert D.case_iii_mse(np.array([1.0, 0.0]), np.array([0.5, 0.5]), 0.3) == math.inf
    # eps large enough to reach a_n = 0: the floor must keep the solver away
    out = D.pps_case_iii(np.array([0.2, 0.0]), 1 / 3, 0.04)
    a_n = (build_J(2) @ out.W_n).ravel()
    assert a_n @ a_n >= 1e-3 * 0.04 * (1 - 1e-6)


@settings(max_examples=15, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(1e-4, 0.05), st.floats(0.05, 1.0))
def test_case_iii_matches_closed_form(w1, w2, eps, sigma2):
    a = abs(w2 - w1)
    if a < 3 * math.sqrt(eps):  # closed form valid only away from the pole
        return
    _, ref = D.case_iii_closed_form(np.array([w1, w2]), sigma2, eps)
    out = D.pps_case_iii(np.array([w1, w2]), sigma2, eps)
    assert out.mse_predicted == pytest.approx(ref, abs=1e-6)


# -- case iv -----------------------------------------------------------------------


def test_case_iv_identity_is_exact_baseline(rng):
    W = rng.normal(size=(2, 3))
    s = _stats(rng, 3)
    A = build_J(2) @ W
    base = np.trace(s.K_half1 - pinv(A) @ A @ s.K_half1) / 3
    assert D.predicted_mse("iv", W, W, s) == pytest.approx(base, abs=1e-12)
    assert D.pps_case_iv(W, s, 0.0).mse_predicted == pytest.approx(base, abs=1e-12)


def test_case_iv_equal_rows_undefined(rng):
    s = _stats(rng, 3)
    assert D.case_iv_mse(rng.normal(size=(2, 3)), np.ones((2, 3)), s) == math.inf


def test_case_iv_outcome_contract(rng):
    W = rng.normal(size=(2, 3))
    s = _stats(rng, 3)
    for eps in (0.01, 0.1):
        out = D.pps_case_iv(W, s, eps)
        assert out.success and abs(out.g_achieved - eps) <= 1e-2 * eps
        a_n = (build_J(2) @ out.W_n).ravel()
        assert a_n @ a_n >= out.diagnostics["eps1"] * (1 - 1e-6)
        assert out.mse_predicted >= max(v for v in (out.diagnostics["direct_mse"], out.diagnostics["table_mse"])
                                        if v is not None) - 1e-12


def test_stationary_table_rows_solve_the_system(rng):
    W = rng.normal(size=(2, 3))
    s = _stats(rng, 3)
    J = build_J(2)
    rows = D.stationary_table(W, s, [-2.0, 0.5, 3.0], [0.0, 0.1])
    assert rows
    for r in rows:
        MM = s.M + s.M.T
        K = np.kron(MM - 2 * r["lambda1"] * np.eye(3), J.T @ J) - r["lambda"] * np.eye(6)
        rhs = (2 * J.T @ (J @ W) @ s.K0 - r["lambda"] * W).reshape(-1, order="F")
        np.testing.assert_allclose(K @ r["W_n"].reshape(-1, order="F"), rhs, atol=1e-9)
        assert r["g"] == pytest.approx(D.interpretability_gap(W, r["W_n"]))


def test_stationary_table_skips_singular_cells(rng):
    W = rng.normal(size=(2, 3))
    s = _stats(rng, 3)
    # lam = 0 with lam1 = 0 leaves (M + M^T) kron J^T J, which is singular
    assert D.stationary_table(W, s, [0.0], [0.0]) == []


def test_case_iv_requires_two_classes(rng):
    with pytest.raises(ValueError):
        D.pps_case_iv(rng.normal(size=(3, 3)), _stats(rng, 3), 0.1)


# -- shared model checks ------------------------------------------------------------


def _random_T(rng, m):
    while True:
        T = rng.normal(size=(m, m))
        if abs(np.linalg.det(T)) > 0.1:
            return T


def test_predicted_mse_T_invariance(rng):
    s4, s3, s1 = _stats(rng, 4), _stats(rng, 3), _stats(rng, 1)
    for _ in range(20):
        W = rng.normal(size=(3, 4))
        R = _haar(rng, 4)
        J = build_J(3)
        T = _random_T(rng, 2)
        assert D.predicted_mse("i", W, W @ R, s4, R=R, J=T @ J) == pytest.approx(
            D.predicted_mse("i", W, W @ R, s4, R=R), abs=1e-8)
        Wn = W + 0.1 * rng.normal(size=W.shape)
        assert D.predicted_mse("i", W, Wn, s4, J=T @ J) == pytest.approx(D.predicted_mse("i", W, Wn, s4), abs=1e-8)
        W5 = rng.normal(size=(5, 3))
        T4 = _random_T(rng, 4)
        # least squares against a mismatched A_n is basis free only when
        # range(A) lies in range(A_n), as it does for rotations
        Wn5 = W5 @ _haar(rng, 3)
        assert D.predicted_mse("ii", W5, Wn5, s3, J=T4 @ build_J(5)) == pytest.approx(
            D.predicted_mse("ii", W5, Wn5, s3), abs=1e-8)
        W2 = rng.normal(size=(2, 3))
        t = _random_T(rng, 1)
        Wn2 = W2 + 0.1 * rng.normal(size=W2.shape)
        assert D.predicted_mse("iv", W2, Wn2, s3, J=t @ build_J(2)) == pytest.approx(
            D.predicted_mse("iv", W2, Wn2, s3), abs=1e-8)
        w = rng.normal(size=(2, 1))
        assert D.predicted_mse("iii", w, w + 0.1, s1, J=t @ build_J(2)) == pytest.approx(
            D.predicted_mse("iii", w, w + 0.1, s1), abs=1e-8)


@pytest.mark.parametrize("case,k,d", [("i", 3, 4), ("ii", 5, 3), ("iii", 4, 1), ("iv", 2, 3)])
def test_plug_in_prediction_equals_simulation(rng, case, k, d):
    X = rng.random((3000, d)) ** 1.3
    s = D.PassiveStats.from_features(X)
    W = rng.normal(size=(k, d))
    out = D.solve(case, W, s, 0.05)
    sim = D.simulate_attack_mse(case, W, out.W_n, X)
    assert out.mse_predicted == pytest.approx(sim, rel=1e-9)
    assert D.predicted_mse(case, W, out.W_n, s) == pytest.approx(sim, rel=1e-9)


def test_population_prediction_close_to_monte_carlo():
    from agnostic_vfl.synthetic import SyntheticSpec, sample_features

    d, k = 3, 5
    mu, K0 = uniform_copula_moments(equicorrelation(d, 0.5))
    s = D.PassiveStats.from_moments(mu, K0)
    W = np.random.default_rng(0).normal(size=(k, d))
    out = D.pps_case_ii(W, s, 0.05)
    X = sample_features(SyntheticSpec(n=100_000, d_t=d, rho=0.5), np.random.default_rng(1))
    assert D.simulate_attack_mse("ii", W, out.W_n, X) == pytest.approx(out.mse_predicted, rel=0.02)


def test_pi_sweep_rows(rng):
    W = rng.normal(size=(3, 1))
    s = _stats(rng, 1)
    assert D.pi_sweep("iii", W, s, [0.0]) == [(0.0, 0.0, 0.0, "ok")]
    rows = D.pi_sweep("iii", W, s, [0.05, 0.0, 0.01])
    assert [r[0] for r in rows] == [0.0, 0.01, 0.05]
    for eps, g, mse, status in rows:
        assert status == "ok" and abs(g - eps) <= 1e-2 * eps
    assert rows[0][2] <= rows[1][2] <= rows[2][2]
