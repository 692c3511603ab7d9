import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from agnostic_vfl.attack import build_J
from agnostic_vfl.data import window_partitions
from agnostic_vfl.model import (
    LRParams, TrainConfig, TrainingDiverged, accuracy, confidence, cross_entropy,
    cross_entropy_grad, load_params, log_ratio, partition_params, predict, save_params,
    softmax, train,
)

logits = hnp.arrays(float, st.tuples(st.integers(1, 5), st.integers(2, 6)),
                    elements=st.floats(-30, 30, allow_nan=False))
# spreads above ~27 push probabilities under the 1e-12 clamp
moderate_logits = hnp.arrays(float, st.tuples(st.integers(1, 5), st.integers(2, 6)),
                             elements=st.floats(-12, 12, allow_nan=False))


def test_confidence_examples():
    c = confidence(LRParams(np.zeros((3, 2)), np.zeros(3)), np.array([0.3, 0.9]))
    np.testing.assert_allclose(c, [1 / 3] * 3, atol=1e-15)
    c = confidence(LRParams(np.zeros((2, 1)), np.array([math.log(2), 0.0])), np.array([0.5]))
    np.testing.assert_allclose(c, [2 / 3, 1 / 3], atol=1e-15)


def test_confidence_rejects_wrong_width():
    with pytest.raises(ValueError):
        confidence(LRParams(np.zeros((2, 3)), np.zeros(2)), np.zeros(2))


@given(logits, st.floats(-100, 100))
def test_softmax_shift_invariant_and_normalized(z, s):
    c = softmax(z)
    np.testing.assert_allclose(c.sum(-1), 1.0, atol=1e-12)
    np.testing.assert_allclose(softmax(z + s), c, atol=1e-12)


@given(moderate_logits)
def test_log_ratio_of_softmax_is_Jz(z):
    J = build_J(z.shape[1])
    np.testing.assert_allclose(log_ratio(softmax(z)), z @ J.T, atol=1e-10)


def test_log_ratio_examples():
    assert log_ratio(np.array([0.25, 0.75]))[0] == pytest.approx(math.log(3))
    np.testing.assert_allclose(log_ratio(np.full(4, 0.25)), 0.0)
    assert np.all(np.isfinite(log_ratio(np.array([0.0, 1.0]))))


def test_cross_entropy_gradient_matches_finite_differences(rng):
    for _ in range(5):
        k, d, n = rng.integers(2, 5), rng.integers(1, 5), 7
        W, b = rng.normal(size=(k, d)), rng.normal(size=k)
        x, y = rng.random((n, d)), rng.integers(0, k, n)
        gW, gb = cross_entropy_grad(W, b, x, y)
        h = 1e-6
        num_W = np.zeros_like(W)
        for i in np.ndindex(W.shape):
            E = np.zeros_like(W)
            E[i] = h
            num_W[i] = (cross_entropy(W + E, b, x, y) - cross_entropy(W - E, b, x, y)) / (2 * h)
        num_b = np.array([(cross_entropy(W, b + h * e, x, y) - cross_entropy(W, b - h * e, x, y)) / (2 * h)
                          for e in np.eye(k)])
        assert np.linalg.norm(gW - num_W) <= 1e-5 * max(np.linalg.norm(num_W), 1e-8)
        assert np.linalg.norm(gb - num_b) <= 1e-5 * max(np.linalg.norm(num_b), 1e-8)


def test_train_separable_toy():
    rng = np.random.default_rng(0)
    x = rng.random((400, 2))
    x = x[np.abs(x[:, 0] - x[:, 1]) > 0.1]
    y = (x[:, 0] > x[:, 1]).astype(int)
    p = train(x, y, TrainConfig(lr=0.05, max_epochs=500, patience=50))
    assert accuracy(p, x, y) == 1.0


def test_train_random_labels_near_majority():
    rng = np.random.default_rng(1)
    x = rng.random((3000, 3))
    y = (rng.random(3000) < 0.7).astype(int)
    p = train(x[:2000], y[:2000])
    majority = max(np.mean(y[2000:]), 1 - np.mean(y[2000:]))
    assert abs(accuracy(p, x[2000:], y[2000:]) - majority) <= 0.05


def test_train_needs_two_classes():
    with pytest.raises(ValueError):
        train(np.zeros((5, 1)), np.zeros(5, int))


def test_divergence_reports_epoch():
    x = np.array([[1e200], [-1e200]] * 4)
    y = np.array([0, 1] * 4)
    with np.errstate(all="ignore"), pytest.raises(TrainingDiverged, match="epoch 1"):
        train(x, y, TrainConfig(lr=1e150))


def test_accuracy_examples(rng):
    x = rng.random((20, 2))
    y = rng.integers(0, 3, 20)
    p = LRParams(rng.normal(size=(3, 2)), rng.normal(size=3))
    brute = sum(int(np.argmax(p.W @ xi + p.b) == yi) for xi, yi in zip(x, y)) / 20
    assert accuracy(p, x, y) == brute
    const = LRParams(np.zeros((2, 2)), np.zeros(2))  # ties -> class 0
    assert np.all(predict(const, x) == 0)
    assert accuracy(const, x, y % 2) == np.mean(y % 2 == 0)


def test_partition_roundtrip_and_wraparound(rng):
    W = rng.normal(size=(2, 19))
    p = LRParams(W, rng.normal(size=2))
    part = window_partitions(19, 5)[18]
    pm = partition_params(p, part)
    np.testing.assert_array_equal(pm.W_pas, W[:, [18, 0, 1, 2, 3]])
    np.testing.assert_array_equal(pm.reassemble(), W)
    pm = partition_params(p, window_partitions(19, 18)[0])
    assert pm.W_act.shape == (2, 1)


def test_params_json_roundtrip(tmp_path, rng):
    p = LRParams(rng.normal(size=(3, 4)), rng.normal(size=3), (0, 1, 2, 3))
    save_params(p, tmp_path / "m.json")
    q = load_params(tmp_path / "m.json")
    np.testing.assert_array_equal(p.W, q.W)
    np.testing.assert_array_equal(p.b, q.b)
    assert q.feature_indices == (0, 1, 2, 3)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(patience=0)
    with pytest.raises(ValueError):
        TrainConfig(validation_fraction=1.0)
