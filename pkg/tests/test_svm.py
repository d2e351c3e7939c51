import numpy as np
import pytest
from hypothesis import given, strategies as st

from precursor.svm import (SvmParams, class_attribute_contributions, decision_values, fit_linear_svm,
                           solve_binary, svm_c_grid, svm_from_arrays, svm_to_arrays)

TOY_X = np.array([[0.0, 0.0], [2.0, 0.0]])
TOY_Y = np.array([0, 1])


def test_hard_margin_toy():
    m = fit_linear_svm(TOY_X, TOY_Y, SvmParams(C=1e6))
    assert np.allclose(m.W[1], [1, 0], atol=1e-3) and abs(m.b[1] + 1) < 1e-3
    assert np.allclose(m.W[0], [-1, 0], atol=1e-3) and abs(m.b[0] - 1) < 1e-3
    margin = 2 / np.linalg.norm(m.W[1])
    assert margin == pytest.approx(2, abs=1e-2)
    s = decision_values(m, np.array([[2, 0], [0, 0], [1, 0]]))[:, 1]
    assert np.allclose(s, [1, -1, 0], atol=1e-3)


def test_toy_dual_solution():
    s = solve_binary(TOY_X, np.array([-1.0, 1.0]), np.full(2, 1e6), tol=1e-8)
    # w = 2 a1 = 1 and b = a1 - a0 = -1
    assert np.allclose(s.alpha, [1.5, 0.5], atol=1e-6)


def test_norm_grows_with_c():
    norms = [np.linalg.norm(fit_linear_svm(TOY_X, TOY_Y, SvmParams(C=C)).W[1]) for C in (1e-3, 1e-1, 1e1, 1e3)]
    assert norms[0] < norms[1] < norms[2] <= norms[3] + 1e-9
    assert norms[3] == pytest.approx(1.0, abs=1e-3)


def test_tiny_c_collapses_to_bias():
    rng = np.random.default_rng(0)
    X = (rng.random((200, 10)) < 0.1).astype(np.uint8)
    y = (X[:, 0] & X[:, 1]).astype(int)  # rare positive class
    m = fit_linear_svm(X, y, SvmParams(C=1e-7))
    assert np.abs(m.W).max() < 1e-4
    s = decision_values(m, X)[:, 1]
    assert np.mean(np.sign(s) == np.sign(m.b[1])) > 0.95


def test_objective_monotone_and_box_feasible():
    rng = np.random.default_rng(1)
    X = (rng.random((300, 20)) < 0.2).astype(float)
    y = np.where(X[:, 0] + rng.random(300) > 0.8, 1.0, -1.0)
    upper = np.where(y > 0, 2.0, 1.0)
    s = solve_binary(X, y, upper, seed=3, tol=1e-5)
    assert s.converged
    assert np.all(np.diff(s.objective_trace) <= 1e-12)
    assert np.all(s.alpha >= 0) and np.all(s.alpha <= upper + 1e-15)
    # KKT audit on 100 random examples
    Xa = np.hstack([X, np.ones((300, 1))])
    w = np.append(s.w, s.b)
    for i in rng.choice(300, 100, replace=False):
        g = y[i] * Xa[i] @ w - 1
        pg = min(g, 0) if s.alpha[i] == 0 else (max(g, 0) if s.alpha[i] == upper[i] else g)
        assert abs(pg) < 1e-4


def test_separable_large_c_zero_training_error():
    rng = np.random.default_rng(2)
    X = (rng.random((150, 8)) < 0.5).astype(np.uint8)
    y = X[:, 2].astype(int)
    m = fit_linear_svm(X, y, SvmParams(C=1e3))
    assert (m.predict(X) == y).all()


def test_duplicating_points_keeps_solution():
    rng = np.random.default_rng(3)
    X = (rng.random((80, 6)) < 0.4).astype(np.uint8)
    y = rng.integers(0, 3, 80)
    y[:3] = [0, 1, 2]
    a = fit_linear_svm(X, y, SvmParams(C=0.5, tol=1e-7))
    b = fit_linear_svm(np.vstack([X, X]), np.concatenate([y, y]), SvmParams(C=0.25, tol=1e-7))
    assert np.allclose(a.W, b.W, atol=1e-3) and np.allclose(a.b, b.b, atol=1e-3)
    assert np.allclose(a.decision_values(X), b.decision_values(X), atol=1e-3)


def test_missing_category_named():
    with pytest.raises(ValueError, match="access"):
        fit_linear_svm(TOY_X, TOY_Y, n_classes=3, category_names=["eq./tools", "rules", "access"])


def test_nonconvergence_sets_warning():
    rng = np.random.default_rng(4)
    X = (rng.random((200, 10)) < 0.5).astype(np.uint8)
    y = rng.integers(0, 2, 200)
    m = fit_linear_svm(X, y, SvmParams(C=1e4, max_iter=2))
    assert m.warning


def test_zero_input_gives_biases_and_ties_go_low():
    m = fit_linear_svm(TOY_X, TOY_Y, SvmParams(C=10))
    assert np.allclose(decision_values(m, np.zeros((1, 2)))[0], m.b)
    m.W[:] = 0
    m.b[:] = 0.3
    assert m.predict(np.zeros((1, 2)))[0] == 0


@given(st.floats(0.01, 100))
def test_positive_scaling_keeps_predictions(c):
    rng = np.random.default_rng(5)
    X = (rng.random((60, 5)) < 0.5).astype(np.uint8)
    y = rng.integers(0, 3, 60)
    y[:3] = [0, 1, 2]
    m = fit_linear_svm(X, y, SvmParams(C=1.0))
    before = m.predict(X)
    m.W *= c
    m.b *= c
    assert np.array_equal(before, m.predict(X))


def test_contributions_top_bottom_and_sign_flip():
    m = fit_linear_svm(TOY_X, TOY_Y, SvmParams(C=1))
    m.W = np.zeros((2, 5))
    m.W[1, 3] = 0.7
    m.W[1, 1] = -0.2
    c = class_attribute_contributions(m, 1, k=1, names=list("abcde"))
    assert c["top_k"] == [("d", 0.7)] and c["bottom_k"] == [("b", -0.2)]
    full = class_attribute_contributions(m, 1, k=5)
    m.W = -m.W
    flipped = class_attribute_contributions(m, 1, k=5)
    assert [a for a, _ in flipped["top_k"]] == [a for a, _ in full["bottom_k"]]
    assert [a for a, _ in flipped["bottom_k"]] == [a for a, _ in full["top_k"]]


def test_c_grid():
    g = svm_c_grid()
    assert len(g) == 800 and g[0] == 1e-7 and g[-1] == 1e7
    assert np.allclose(np.diff(np.log10(g)), 14 / 799)


def test_thread_independent_and_roundtrip():
    rng = np.random.default_rng(6)
    X = (rng.random((100, 8)) < 0.4).astype(np.uint8)
    y = rng.integers(0, 4, 100)
    y[:4] = [0, 1, 2, 3]
    a = fit_linear_svm(X, y, SvmParams(C=1, seed=2), threads=1)
    b = fit_linear_svm(X, y, SvmParams(C=1, seed=2), threads=4)
    assert np.array_equal(a.W, b.W) and np.array_equal(a.b, b.b)
    c = svm_from_arrays(svm_to_arrays(a), a.params, 4)
    assert np.array_equal(c.decision_values(X), a.decision_values(X))
