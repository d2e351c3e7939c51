import json

import numpy as np
import pytest
from hypothesis import given, strategies as st, assume

from precursor.tree import TreeParams, best_split, fit_tree, gini_impurity, predict_tree

from cart_oracle import exhaustive_best_split, gini


def load_fixtures(fixtures_dir):
    out = []
    for p in sorted((fixtures_dir / "cart").glob("*.json")):
        out.append(json.loads(p.read_text()))
    return out


def _as_array(fx):
    X = np.array(fx["X"])
    return X.astype(np.uint8) if fx["kind"] == "binary" else X.astype(np.float64)


def test_fixtures_are_small(fixtures_dir):
    fxs = load_fixtures(fixtures_dir)
    assert len(fxs) >= 10
    for fx in fxs:
        assert len(fx["X"]) <= 40 and len(fx["X"][0]) <= 4


def test_depth1_split_matches_oracle(fixtures_dir):
    for fx in load_fixtures(fixtures_dir):
        X = _as_array(fx)
        y = np.array(fx["y"])
        w = fx.get("sample_weight")
        expect = exhaustive_best_split(fx["X"], fx["y"], fx["n_classes"], w)
        got = best_split(X, y, range(X.shape[1]), sample_weight=w, n_classes=fx["n_classes"])
        if expect is None:
            assert got is None, fx["name"]
            continue
        assert (got.feature, got.threshold) == (expect[0], expect[1]), fx["name"]
        assert got.gain == pytest.approx(expect[2], abs=1e-12)
        tree = fit_tree(X, y, TreeParams(max_depth=1), n_classes=fx["n_classes"], sample_weight=w)
        assert tree.feature[0] == expect[0]


def test_gini_values():
    assert gini_impurity([5, 5]) == pytest.approx(0.5)
    assert gini_impurity([7, 0, 0]) == 0.0
    with pytest.raises(ValueError):
        gini_impurity([0, 0])


def test_tie_goes_to_first_feature():
    X = np.array([[0, 0], [0, 0], [1, 1], [1, 1]], dtype=np.uint8)
    y = np.array([0, 0, 1, 1])
    assert best_split(X, y, [0, 1]).feature == 0
    assert best_split(X, y, [1, 0]).feature == 1


def test_pure_node_is_leaf():
    X = np.eye(4, dtype=np.uint8)
    t = fit_tree(X, np.zeros(4, dtype=int), n_classes=2)
    assert t.n_nodes == 1


def test_min_leaf_blocks_split():
    X = np.array([[1], [0], [0], [0]], dtype=np.uint8)
    y = np.array([1, 0, 0, 0])
    assert best_split(X, y, [0], min_leaf=2) is None
    assert best_split(X, y, [0], min_leaf=1).feature == 0


def test_leaf_majority_lowest_index_on_tie():
    X = np.zeros((4, 1), dtype=np.uint8)
    t = fit_tree(X, np.array([1, 0, 1, 0]), n_classes=2)
    cls, dist = predict_tree(t, [0])
    assert cls == 0 and np.allclose(dist, [0.5, 0.5])


def test_class_weights_shift_majority():
    X = np.zeros((4, 1), dtype=np.uint8)
    y = np.array([0, 0, 0, 1])
    assert predict_tree(fit_tree(X, y, n_classes=2), [0])[0] == 0
    t = fit_tree(X, y, TreeParams(class_weights=(1.0, 4.0)), n_classes=2)
    assert predict_tree(t, [0])[0] == 1


def test_perfectly_separable_tree_fits_training_data():
    rng = np.random.default_rng(5)
    X = (rng.random((60, 6)) < 0.5).astype(np.uint8)
    y = X[:, 0] ^ X[:, 3]
    t = fit_tree(X, y, n_classes=2)
    assert (t.predict(X) == y).all()


def test_max_depth_respected():
    rng = np.random.default_rng(1)
    X = (rng.random((200, 10)) < 0.5).astype(np.uint8)
    y = rng.integers(0, 3, 200)
    assert fit_tree(X, y, TreeParams(max_depth=3), n_classes=3).depth() <= 3


def test_zero_rows_rejected():
    with pytest.raises(ValueError):
        fit_tree(np.zeros((0, 3), np.uint8), np.zeros(0, int))


binary_data = st.integers(2, 40).flatmap(lambda n: st.tuples(
    st.lists(st.lists(st.integers(0, 1), min_size=3, max_size=3), min_size=n, max_size=n),
    st.lists(st.integers(0, 2), min_size=n, max_size=n)))


@given(binary_data)
def test_split_never_worse_than_oracle(data):
    X, y = data
    assume(len(set(y)) > 1)
    got = best_split(np.array(X, dtype=np.uint8), np.array(y), [0, 1, 2], n_classes=3)
    expect = exhaustive_best_split(X, y, 3)
    if expect is None:
        assert got is None
    else:
        assert got.feature == expect[0] and got.gain == pytest.approx(expect[2], abs=1e-12)


@given(binary_data)
def test_children_impurity_weighted_never_exceeds_parent(data):
    X, y = data
    Xa = np.array(X, dtype=np.uint8)
    t = fit_tree(Xa, np.array(y), n_classes=3)
    for i in range(t.n_nodes):
        if t.feature[i] >= 0:
            l, r = t.left[i], t.right[i]
            wl, wr = t.value[l].sum(), t.value[r].sum()
            child = (wl * t.impurity[l] + wr * t.impurity[r]) / (wl + wr)
            assert child < t.impurity[i] + 1e-12
            assert t.n_samples[l] + t.n_samples[r] == t.n_samples[i]
    assert t.value[0].sum() == len(y)
    assert gini(list(t.value[0])) == pytest.approx(t.impurity[0])


def test_feature_subset_is_reproducible():
    rng = np.random.default_rng(0)
    X = (rng.random((300, 20)) < 0.3).astype(np.uint8)
    y = rng.integers(0, 3, 300)
    p = TreeParams(feature_subset_size=4)
    a = fit_tree(X, y, p, rng=np.random.default_rng(9), n_classes=3)
    b = fit_tree(X, y, p, rng=np.random.default_rng(9), n_classes=3)
    assert np.array_equal(a.feature, b.feature) and np.array_equal(a.value, b.value)


def test_numeric_features_use_midpoints():
    X = np.array([[1.0], [2.0], [4.0], [8.0]])
    y = np.array([0, 0, 1, 1])
    s = best_split(X, y, [0])
    assert s.threshold == 3.0
