"""CART classification trees: weighted Gini, greedy binary splits, depth/size stopping."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .kernels import GAIN_TIE_TOL, MIN_GAIN


def gini_impurity(weighted_counts):
    """``1 - sum(p_k^2)`` for per-class (weighted) counts."""
    c = np.asarray(weighted_counts, dtype=np.float64)
    total = c.sum()
    if not total > 0:
        raise ValueError("gini impurity is undefined for an empty node")
    p = c / total
    return float(1.0 - np.dot(p, p))


def _gini_rows(counts, totals):
    # counts (m, K), totals (m,) > 0
    p = counts / totals[:, None]
    return 1.0 - np.einsum("ij,ij->i", p, p)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


@dataclass(frozen=True)
class TreeParams:
    max_depth: Optional[int] = None
    min_leaf: int = 1
    feature_subset_size: Optional[int] = None
    class_weights: Optional[tuple] = None

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.feature_subset_size is not None and self.feature_subset_size < 1:
            raise ValueError("feature_subset_size must be >= 1")
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))


class Tree:
    """Flat pre-order array representation of a fitted tree.

    ``feature[i] == -1`` marks a leaf.  ``value`` holds the weighted class
    counts of the training rows that reached each node.
    """

    def __init__(self, feature, threshold, left, right, value, n_samples, impurity):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.impurity = np.asarray(impurity, dtype=np.float64)

    @property
    def n_nodes(self):
        return len(self.feature)

    @property
    def n_classes(self):
        return self.value.shape[1]

    @property
    def is_leaf(self):
        return self.feature < 0

    def depth(self):
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X):
        return kernels.apply_tree(self.feature, self.threshold, self.left, self.right, np.asarray(X))

    def leaf_distribution(self):
        v = self.value
        return v / v.sum(axis=1, keepdims=True)

    def predict_proba(self, X):
        return self.leaf_distribution()[self.apply(X)]

    def predict(self, X):
        return np.argmax(self.value, axis=1)[self.apply(X)]

    def to_arrays(self, prefix=""):
        return {
            prefix + "feature": self.feature,
            prefix + "threshold": self.threshold,
            prefix + "left": self.left,
            prefix + "right": self.right,
            prefix + "value": self.value,
            prefix + "n_samples": self.n_samples,
            prefix + "impurity": self.impurity,
        }

    @classmethod
    def from_arrays(cls, arrays, prefix=""):
        return cls(*(arrays[prefix + k] for k in
                     ("feature", "threshold", "left", "right", "value", "n_samples", "impurity")))


def predict_tree(tree, x):
    """Majority class and class distribution of the leaf reached by ``x``."""
    leaf = int(tree.apply(np.asarray(x).reshape(1, -1))[0])
    dist = tree.leaf_distribution()[leaf]
    return int(np.argmax(tree.value[leaf])), dist


# --------------------------------------------------------------------------
# split search

def _is_binary(X):
    return X.dtype in (np.uint8, np.bool_)


def _binary_split(X, rows, candidates, V, parent, min_leaf):
    K = parent.shape[0]
    sums = kernels.feature_sums(X, rows, candidates, V)
    right = sums[:, :K]
    n_right = np.rint(sums[:, K]).astype(np.int64)
    left = parent[None, :] - right
    n_left = len(rows) - n_right
    ok = (n_right >= min_leaf) & (n_left >= min_leaf)
    if not ok.any():
        return None
    wl = left.sum(axis=1)
    wr = right.sum(axis=1)
    wp = parent.sum()
    gains = np.full(len(candidates), -np.inf)
    idx = np.flatnonzero(ok)
    gl = _gini_rows(left[idx], wl[idx])
    gr = _gini_rows(right[idx], wr[idx])
    gains[idx] = gini_impurity(parent) - (wl[idx] * gl + wr[idx] * gr) / wp
    return gains, np.full(len(candidates), 0.5)


def _numeric_split(X, rows, candidates, y, w, parent, min_leaf):
    K = parent.shape[0]
    wp = parent.sum()
    g_parent = gini_impurity(parent)
    gains = np.full(len(candidates), -np.inf)
    thresholds = np.zeros(len(candidates))
    yr, wr_ = y[rows], w[rows]
    onehot = np.zeros((len(rows), K))
    onehot[np.arange(len(rows)), yr] = wr_
    for a, f in enumerate(candidates):
        vals = X[rows, f].astype(np.float64)
        order = np.argsort(vals, kind="stable")
        sv = vals[order]
        cum = np.cumsum(onehot[order], axis=0)
        # candidate cut after position i (left = rows[:i+1])
        cut = np.flatnonzero(sv[1:] > sv[:-1])
        if not cut.size:
            continue
        n_left = cut + 1
        keep = (n_left >= min_leaf) & (len(rows) - n_left >= min_leaf)
        cut = cut[keep]
        if not cut.size:
            continue
        left = cum[cut]
        right = parent[None, :] - left
        wl, wr = left.sum(axis=1), right.sum(axis=1)
        g = g_parent - (wl * _gini_rows(left, wl) + wr * _gini_rows(right, wr)) / wp
        best = int(np.argmax(g))
        gains[a] = g[best]
        thresholds[a] = 0.5 * (sv[cut[best]] + sv[cut[best] + 1])
    return gains, thresholds


def _pick(gains, thresholds, candidates):
    top = gains.max()
    if not np.isfinite(top) or top <= MIN_GAIN:
        return None
    a = int(np.flatnonzero(gains >= top - GAIN_TIE_TOL * max(1.0, abs(top)))[0])
    return Split(int(candidates[a]), float(thresholds[a]), float(gains[a]))


def best_split(X, y, candidate_features, sample_weight=None, n_classes=None,
               min_leaf=1, rows=None):
    """Best Gini split of the node holding ``rows`` over the candidate features.

    Among equal gains the earliest candidate wins.  Returns None when no split
    has positive gain or every split leaves a child below ``min_leaf`` rows.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    K = int(n_classes if n_classes is not None else y.max() + 1)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    rows = np.arange(len(y)) if rows is None else np.asarray(rows, dtype=np.int64)
    candidates = np.asarray(candidate_features, dtype=np.int64)
    parent = np.bincount(y[rows], weights=w[rows], minlength=K)
    if _is_binary(X):
        V = _stack_targets(y, w, K)
        res = _binary_split(X, rows, candidates, V, parent, min_leaf)
    else:
        res = _numeric_split(X, rows, candidates, y, w, parent, min_leaf)
    if res is None:
        return None
    return _pick(res[0], res[1], candidates)


def _stack_targets(y, w, K):
    V = np.zeros((len(y), K + 1))
    V[np.arange(len(y)), y] = w
    V[:, K] = 1.0
    return V


# --------------------------------------------------------------------------
# fitting

class _NumericBuilder:
    """Recursive builder for real-valued features (midpoint thresholds)."""

    def __init__(self, X, y, w, K, params, state):
        self.X, self.y, self.w, self.K = X, y, w, K
        self.params = params
        self.state = state
        self.n_features = X.shape[1]
        self.nodes = []

    def candidates(self):
        m = self.params.feature_subset_size
        p = self.n_features
        if m is None or m >= p:
            return np.arange(p, dtype=np.int64)
        self.state, cand = kernels.numpy_impl.sample_features(self.state, p, m)
        return cand

    def grow(self, rows, depth):
        y, w, K = self.y, self.w, self.K
        counts = np.bincount(y[rows], weights=w[rows], minlength=K)
        imp = gini_impurity(counts)
        node = [-1, 0.0, -1, -1, counts, len(rows), imp]
        idx = len(self.nodes)
        self.nodes.append(node)
        p = self.params
        if (imp <= 0.0
                or (p.max_depth is not None and depth >= p.max_depth)
                or len(rows) < 2 * p.min_leaf):
            return idx
        cand = self.candidates()
        res = _numeric_split(self.X, rows, cand, y, w, counts, p.min_leaf)
        split = None if res is None else _pick(res[0], res[1], cand)
        if split is None:
            return idx
        go_right = self.X[rows, split.feature] > split.threshold
        node[0], node[1] = split.feature, split.threshold
        node[2] = self.grow(rows[~go_right], depth + 1)
        node[3] = self.grow(rows[go_right], depth + 1)
        return idx

    def tree(self):
        cols = list(zip(*self.nodes))
        return Tree(cols[0], cols[1], cols[2], cols[3], np.array(cols[4]).reshape(-1, self.K),
                    cols[5], cols[6])


def fit_tree(X, y, params=TreeParams(), rng=None, n_classes=None, rows=None, sample_weight=None):
    """Grow a CART tree.

    ``rows`` selects (possibly repeated) training rows, which is how bootstrap
    samples are passed in.  Class weights in ``params`` multiply into
    ``sample_weight``.  Feature subsets, when requested, are drawn from ``rng``
    at every node before any gain is computed.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("cannot fit a tree on zero rows")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    w = np.ones(len(y)) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64).copy()
    if params.class_weights is not None:
        cw = np.asarray(params.class_weights, dtype=np.float64)
        if len(cw) != K:
            raise ValueError(f"expected {K} class weights, got {len(cw)}")
        w = w * cw[y]
    rows = np.arange(len(y), dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("cannot fit a tree on zero rows")
    if rng is None:
        rng = np.random.default_rng(0)
    state = int(rng.integers(0, 2**63, dtype=np.int64))
    if _is_binary(X):
        feature, left, right, value, nsamp, imp = kernels.grow_binary_tree(
            X, y, w, rows, K,
            -1 if params.max_depth is None else params.max_depth,
            params.min_leaf,
            0 if params.feature_subset_size is None else params.feature_subset_size,
            state)
        threshold = np.where(feature >= 0, 0.5, 0.0)
        return Tree(feature, threshold, left, right, value, nsamp, imp)
    b = _NumericBuilder(X, y, w, K, params, state)
    b.grow(rows, 0)
    return b.tree()
