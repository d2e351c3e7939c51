import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from precursor.forest import ForestParams
from precursor.gbm import GbmParams
from precursor.stack import (META_C, StackModel, fit_meta, meta_objective, predict_stacked,
                             stack_features, stack_from_arrays, stack_to_arrays, train_stack)


def _dist(rng, n, K):
    P = rng.random((n, K)) + 1e-3
    return P / P.sum(axis=1, keepdims=True)


def test_features_of_two_one_hots():
    e = np.eye(4)[2]
    assert np.array_equal(stack_features(e, e), [0, 0, 2, 0])


def test_features_of_two_uniforms():
    u = np.full(4, 0.25)
    assert np.allclose(stack_features(u, u), 0.5)


def test_features_shape_mismatch():
    with pytest.raises(ValueError):
        stack_features(np.full(4, 0.25), np.full(3, 1 / 3))


@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_features_sum_to_two(K, seed):
    rng = np.random.default_rng(seed)
    z = stack_features(_dist(rng, 5, K), _dist(rng, 5, K))
    assert np.allclose(z.sum(axis=1), 2.0, atol=1e-9)
    assert z.min() >= 0 and z.max() <= 2


def test_meta_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    K, n = 4, 30
    Z = stack_features(_dist(rng, n, K), _dist(rng, n, K))
    y = rng.integers(0, K, n)
    for _ in range(20):
        theta = rng.normal(size=K * (K + 1))
        _, g = meta_objective(theta, Z, y, META_C)
        h = 1e-6
        fd = np.array([(meta_objective(theta + h * e, Z, y)[0] - meta_objective(theta - h * e, Z, y)[0]) / (2 * h)
                       for e in np.eye(len(theta))])
        assert np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12) < 1e-6


def test_perfect_agreeing_bases():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 3, 60)
    P = np.eye(3)[y]
    stack = fit_meta(stack_features(P, P), y, 3)
    assert stack.grad_norm < 1e-6
    _, pred = predict_stacked(stack, P, P)
    assert np.array_equal(pred, y)


def test_single_class_labels_rejected():
    P = np.full((10, 3), 1 / 3)
    with pytest.raises(ValueError):
        fit_meta(stack_features(P, P), np.zeros(10, dtype=int), 3)


def test_zero_weights_give_uniform():
    stack = StackModel(np.zeros((5, 5)), np.zeros(5))
    rng = np.random.default_rng(1)
    P, pred = predict_stacked(stack, _dist(rng, 7, 5), _dist(rng, 7, 5))
    assert np.allclose(P, 0.2)
    assert (pred == 0).all()


def test_diagonal_meta_follows_larger_sum():
    stack = StackModel(np.eye(3) * 2.0, np.zeros(3))
    rng = np.random.default_rng(2)
    pf, pg = _dist(rng, 50, 3), _dist(rng, 50, 3)
    _, pred = predict_stacked(stack, pf, pg)
    assert np.array_equal(pred, np.argmax(pf + pg, axis=1))


@given(arrays(np.float64, (3, 3), elements=st.floats(-5, 5)), st.integers(0, 2**31 - 1))
def test_outputs_are_distributions(W, seed):
    rng = np.random.default_rng(seed)
    stack = StackModel(W, rng.normal(size=3))
    P, _ = predict_stacked(stack, _dist(rng, 1000, 3), _dist(rng, 1000, 3))
    assert np.all(P >= 0) and np.allclose(P.sum(axis=1), 1.0)


def test_recompute_through_serialized_weights():
    rng = np.random.default_rng(4)
    K = 4
    Z = stack_features(_dist(rng, 80, K), _dist(rng, 80, K))
    y = rng.integers(0, K, 80)
    stack = fit_meta(Z, y, K)
    arrays_ = stack_to_arrays(stack)
    raw = {k: np.frombuffer(v.tobytes(), dtype=v.dtype).reshape(v.shape) for k, v in arrays_.items()}
    # independent recomputation: plain python softmax
    pf, pg = _dist(rng, 20, K), _dist(rng, 20, K)
    P, _ = predict_stacked(stack_from_arrays(raw, META_C, (), False), pf, pg)
    for i in range(20):
        z = [pf[i, j] + pg[i, j] for j in range(K)]
        s = [sum(raw["meta.W"][k, j] * z[j] for j in range(K)) + raw["meta.b"][k] for k in range(K)]
        m = max(s)
        e = [np.exp(v - m) for v in s]
        assert np.allclose(P[i], [v / sum(e) for v in e], rtol=0, atol=1e-15)


def test_default_pipeline_never_uses_svm():
    rng = np.random.default_rng(5)
    X = (rng.random((200, 80)) < 0.1).astype(np.uint8)
    y = X[:, 0] + 2 * X[:, 1] * (1 - X[:, 0])
    stack, forest, gbm, svm = train_stack(X[:150], y[:150], X[150:], y[150:],
                                          ForestParams(ntree=10, seed=1), GbmParams(max_depth=2, ntrees_cap=20, patience=5),
                                          n_classes=3)
    assert svm is None and not stack.use_svm
    assert stack.W.shape == (3, 3)
