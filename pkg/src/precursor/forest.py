"""Bagged CART ensembles (Random Forest) with out-of-bag bookkeeping."""
import hashlib
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from ._parallel import pmap
from .tree import Tree, TreeParams, fit_tree

NTREE_GRID = tuple(range(100, 1201, 100))
MTRY_GRID = tuple(range(5, 46, 5))
NODESIZE_GRID = (1, 2, 5, 10)


class UnsupportedOperation(RuntimeError):
    pass


@dataclass(frozen=True)
class ForestParams:
    ntree: int = 500
    mtry: Optional[int] = 9
    nodesize: int = 1
    class_weights: Optional[tuple] = None
    seed: int = 0
    vote: str = "hard"

    def __post_init__(self):
        if self.ntree < 1:
            raise ValueError("ntree must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.nodesize < 1:
            raise ValueError("nodesize must be >= 1")
        if self.vote not in ("hard", "soft"):
            raise ValueError("vote must be 'hard' or 'soft'")
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))

    def to_json(self):
        d = asdict(self)
        if d["class_weights"] is not None:
            d["class_weights"] = list(d["class_weights"])
        return d


def data_digest(X, y):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype=np.uint8).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def bootstrap_sample(n, rng):
    """``n`` row indices drawn uniformly with replacement, plus the out-of-bag rows."""
    if n < 1:
        raise ValueError("bootstrap needs n >= 1")
    idx = rng.integers(0, n, size=n)
    drawn = np.zeros(n, dtype=bool)
    drawn[idx] = True
    return idx, np.flatnonzero(~drawn)


class ForestModel:
    def __init__(self, trees, oob_masks, params, n_classes, n_train, train_digest):
        self.trees = list(trees)
        self.oob_masks = oob_masks  # (ntree, n_train) bool, or None when not retained
        self.params = params
        self.n_classes = n_classes
        self.n_train = n_train
        self.train_digest = train_digest

    def predict_proba(self, X, vote=None):
        return predict_proba_forest(self, X, vote)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)

    def used_features(self, t):
        f = self.trees[t].feature
        return np.unique(f[f >= 0])


def _tree_seed(seed, t):
    return np.random.default_rng([int(seed), int(t)])


def fit_forest(X, y, params=ForestParams(), n_classes=None, threads=None):
    """Grow ``params.ntree`` unpruned trees on bootstrap samples.

    Every tree draws from its own RNG stream keyed by (seed, tree index), so
    the fitted forest does not depend on the thread count.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    n = len(y)
    if n == 0:
        raise ValueError("empty training set")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    tp = TreeParams(max_depth=None, min_leaf=params.nodesize,
                    feature_subset_size=params.mtry, class_weights=params.class_weights)

    def grow(t):
        rng = _tree_seed(params.seed, t)
        idx, oob = bootstrap_sample(n, rng)
        tree = fit_tree(X, y, tp, rng=rng, n_classes=K, rows=idx)
        mask = np.zeros(n, dtype=bool)
        mask[oob] = True
        return tree, mask

    out = pmap(grow, range(params.ntree), threads)
    trees = [t for t, _ in out]
    masks = np.array([m for _, m in out]).reshape(params.ntree, n)
    return ForestModel(trees, masks, params, K, n, data_digest(X, y))


def predict_proba_forest(model, X, vote=None):
    """Hard-vote shares per class (``vote='soft'`` averages leaf distributions)."""
    X = np.asarray(X)
    vote = vote or model.params.vote
    K = model.n_classes
    if vote == "hard":
        counts = np.zeros((X.shape[0], K), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in model.trees:
            np.add.at(counts, (rows, tree.predict(X)), 1)
        return counts / len(model.trees)
    acc = np.zeros((X.shape[0], K))
    for tree in model.trees:
        acc += tree.predict_proba(X)
    return acc / len(model.trees)


def _require_oob(model, X, y):
    if model.oob_masks is None:
        raise UnsupportedOperation("model was saved without out-of-bag masks")
    if len(y) != model.n_train or data_digest(X, y) != model.train_digest:
        raise ValueError("data does not match the forest's training set")


def oob_predict_proba(model, X, y):
    """Vote shares from the trees for which each training row was out of bag.

    Rows that were in every bootstrap sample get a row of NaN.
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    _require_oob(model, X, y)
    counts = np.zeros((len(y), model.n_classes), dtype=np.int64)
    for tree, mask in zip(model.trees, model.oob_masks):
        rows = np.flatnonzero(mask)
        if rows.size:
            np.add.at(counts, (rows, tree.predict(X[rows])), 1)
    total = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(total > 0, counts / np.maximum(total, 1), np.nan)


def oob_accuracy(model, X, y):
    proba = oob_predict_proba(model, X, y)
    seen = ~np.isnan(proba[:, 0])
    return float(np.mean(np.argmax(proba[seen], axis=1) == np.asarray(y)[seen]))


@dataclass
class Importance:
    raw: np.ndarray
    normalized: np.ndarray


def normalize_to_max(scores):
    scores = np.asarray(scores, dtype=np.float64)
    top = scores.max() if scores.size else 0.0
    return scores / top if top > 0 else scores.copy()


def permutation_importance(model, X, y, seed=0, permuter=None, threads=None):
    """Mean increase in out-of-bag error when a feature is shuffled.

    For every tree, each feature it splits on is permuted among that tree's
    OOB rows and the misclassification rate is compared with the intact OOB
    rows.  Features a tree never uses contribute exactly zero for it.
    ``permuter(rng, n)`` overrides the shuffle (identity gives all zeros).
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    _require_oob(model, X, y)
    p = X.shape[1]
    if permuter is None:
        permuter = lambda rng, n: rng.permutation(n)  # noqa: E731

    def per_tree(t):
        inc = np.zeros(p)
        rows = np.flatnonzero(model.oob_masks[t])
        if not rows.size:
            return inc, 0
        tree = model.trees[t]
        Xo = X[rows]
        base = np.mean(tree.predict(Xo) != y[rows])
        for j in model.used_features(t):
            rng = np.random.default_rng([int(seed), t, int(j)])
            Xp = Xo.copy()
            Xp[:, j] = Xo[permuter(rng, len(rows)), j]
            inc[j] = np.mean(tree.predict(Xp) != y[rows]) - base
        return inc, 1

    out = pmap(per_tree, range(len(model.trees)), threads)
    used = sum(k for _, k in out)
    raw = sum(inc for inc, _ in out) / max(used, 1)
    return Importance(raw, normalize_to_max(raw))


def forest_to_arrays(model):
    arrays = {}
    for t, tree in enumerate(model.trees):
        arrays.update(tree.to_arrays(f"t{t}."))
    if model.oob_masks is not None:
        arrays["oob_masks"] = np.packbits(model.oob_masks, axis=1)
    return arrays


def forest_from_arrays(arrays, params, n_classes, n_train, train_digest):
    trees = [Tree.from_arrays(arrays, f"t{t}.") for t in range(params.ntree)]
    masks = None
    if "oob_masks" in arrays:
        masks = np.unpackbits(arrays["oob_masks"], axis=1, count=n_train).astype(bool)
    return ForestModel(trees, masks, params, n_classes, n_train, train_digest)
