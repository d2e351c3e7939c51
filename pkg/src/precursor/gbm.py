"""Stochastic gradient-boosted trees on the multinomial / binomial log loss.

Second-order (gradient + hessian) boosting with shrinkage, row subsampling
without replacement, per-level column sampling, an L2 penalty on leaf values,
a minimum hessian per child and early stopping on a validation set.
"""
import math
from dataclasses import dataclass, asdict, replace
from typing import Optional

import numpy as np

from . import kernels
from ._parallel import pmap
from .forest import Importance, normalize_to_max

PROB_CLAMP = 1e-12

MAX_DEPTH_GRID = (3, 4, 5, 6)
LEARNING_RATE_GRID = (0.01, 0.05, 0.1)
MIN_CHILD_WEIGHT_GRID = (1, 3, 5)
SUBSAMPLE_GRID = (0.3, 0.5, 0.7, 1.0)
COLSAMPLE_BYLEVEL_GRID = (0.3, 0.5, 0.7, 1.0)


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class GbmParams:
    max_depth: int = 6
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    subsample: float = 1.0
    colsample_bylevel: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0  # minimum split gain
    ntrees_cap: int = 2000
    patience: int = 200
    n_rounds: Optional[int] = None
    class_weights: Optional[tuple] = None
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1:
            raise ConfigurationError("max_depth must be >= 1")
        if self.learning_rate < 0:
            raise ConfigurationError("learning_rate must be >= 0")
        for name in ("subsample", "colsample_bylevel"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigurationError(f"{name} must lie in (0, 1]")
        if self.reg_lambda < 0 or self.min_child_weight < 0 or self.gamma < 0:
            raise ConfigurationError("reg_lambda, gamma and min_child_weight must be >= 0")
        if self.ntrees_cap < 1 or self.patience < 1:
            raise ConfigurationError("ntrees_cap and patience must be >= 1")
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))

    @classmethod
    def from_json(cls, d):
        d = dict(d)
        if "lambda" in d:
            d["reg_lambda"] = d.pop("lambda")
        d.pop("ntrees", None)
        return cls(**d)

    def to_json(self):
        d = asdict(self)
        if d["class_weights"] is not None:
            d["class_weights"] = list(d["class_weights"])
        return d


# --------------------------------------------------------------------------
# loss

def softmax(F):
    F = np.asarray(F, dtype=np.float64)
    z = F - F.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(f):
    f = np.asarray(f, dtype=np.float64)
    out = np.empty_like(f)
    pos = f >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-f[pos]))
    ef = np.exp(f[~pos])
    out[~pos] = ef / (1.0 + ef)
    return out


def softmax_logloss(scores, label, weight=1.0):
    """Weighted multinomial log loss of one example with its gradient and hessian diagonal.

    Returns ``(loss, grad, hess)`` with ``grad_k = w (p_k - [k == label])`` and
    ``hess_k = w p_k (1 - p_k)``.
    """
    p = softmax(np.asarray(scores, dtype=np.float64))
    onehot = np.zeros_like(p)
    onehot[label] = 1.0
    loss = -weight * math.log(min(max(p[label], PROB_CLAMP), 1 - PROB_CLAMP))
    return loss, weight * (p - onehot), weight * p * (1 - p)


def binary_logloss(score, label, weight=1.0):
    """Binomial counterpart of :func:`softmax_logloss` on a single logit."""
    p = float(sigmoid(np.array([score]))[0])
    pc = min(max(p, PROB_CLAMP), 1 - PROB_CLAMP)
    loss = -weight * (math.log(pc) if label == 1 else math.log(1 - pc))
    return loss, weight * (p - label), weight * p * (1 - p)


def _proba(F, K):
    if K == 2:
        p1 = sigmoid(F[:, 0])
        return np.column_stack([1 - p1, p1])
    return softmax(F)


def _grad_hess(F, y, w, K):
    if K == 2:
        p = sigmoid(F[:, 0])
        return (w * (p - y))[:, None], (w * p * (1 - p))[:, None]
    P = softmax(F)
    G = P.copy()
    G[np.arange(len(y)), y] -= 1.0
    return G * w[:, None], P * (1 - P) * w[:, None]


def mean_logloss(P, y, w):
    p = np.clip(P[np.arange(len(y)), y], PROB_CLAMP, 1 - PROB_CLAMP)
    return float(np.sum(-w * np.log(p)) / np.sum(w))


# --------------------------------------------------------------------------
# model

class RegTree:
    def __init__(self, feature, left, right, value, gain, cover):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.gain = np.asarray(gain, dtype=np.float64)
        self.cover = np.asarray(cover, dtype=np.float64)
        self.threshold = np.where(self.feature >= 0, 0.5, 0.0)

    def apply(self, X):
        return kernels.apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X):
        return self.value[self.apply(X)]

    _FIELDS = ("feature", "left", "right", "value", "gain", "cover")

    def to_arrays(self, prefix):
        return {prefix + k: getattr(self, k) for k in self._FIELDS}

    @classmethod
    def from_arrays(cls, arrays, prefix):
        return cls(*(arrays[prefix + k] for k in cls._FIELDS))


class GbmModel:
    def __init__(self, rounds, base_scores, best_round, params, n_classes, history=None):
        self.rounds = rounds  # list of per-round lists of RegTree
        self.base_scores = np.asarray(base_scores, dtype=np.float64)
        self.best_round = int(best_round)
        self.params = params
        self.n_classes = n_classes
        self.history = history or []  # (round, train_loss, val_loss)

    @property
    def n_outputs(self):
        return 1 if self.n_classes == 2 else self.n_classes

    def decision_function(self, X, n_rounds=None):
        X = np.asarray(X)
        n_rounds = self.best_round if n_rounds is None else n_rounds
        F = np.tile(self.base_scores, (X.shape[0], 1))
        for trees in self.rounds[:n_rounds]:
            for k, tree in enumerate(trees):
                F[:, k] += tree.predict(X)
        return F

    def predict_proba(self, X):
        return predict_proba_gbm(self, X)

    def predict(self, X):
        return np.argmax(self.predict_proba(X), axis=1)


def predict_proba_gbm(model, X):
    """Class probabilities from the first ``best_round`` rounds."""
    return _proba(model.decision_function(X), model.n_classes)


def predict_proba_reference(model, x):
    """Slow path for one row: walks every node explicitly."""
    x = np.asarray(x)
    f = model.base_scores.copy()
    for trees in model.rounds[:model.best_round]:
        for k, tree in enumerate(trees):
            node = 0
            while tree.feature[node] >= 0:
                node = tree.right[node] if x[tree.feature[node]] > 0.5 else tree.left[node]
            f[k] += tree.value[node]
    return _proba(f.reshape(1, -1), model.n_classes)[0]


class EarlyStopping:
    """Tracks the best validation loss; stops after ``patience`` rounds without a decrease."""

    def __init__(self, patience=200, cap=2000):
        self.patience = patience
        self.cap = cap
        self.best_loss = math.inf
        self.best_round = 0
        self.round = 0

    def start(self, loss):
        self.best_loss = loss
        self.best_round = 0
        self.round = 0

    def update(self, loss):
        """Record the loss of the next round; returns False once training should stop."""
        self.round += 1
        if loss < self.best_loss:
            self.best_loss = loss
            self.best_round = self.round
        if self.round >= self.cap:
            return False
        return self.round - self.best_round < self.patience


def _base_scores(y, w, K):
    prior = np.bincount(y, weights=w, minlength=K) / w.sum()
    prior = np.clip(prior, PROB_CLAMP, 1.0)
    if K == 2:
        return np.array([math.log(prior[1] / prior[0])])
    return np.log(prior)


def _level_features(rng, p, max_depth, colsample):
    m = min(p, max(1, math.ceil(colsample * p)))
    out = np.empty((max_depth, m), dtype=np.int64)
    for d in range(max_depth):
        out[d] = np.arange(p) if m == p else np.sort(rng.choice(p, size=m, replace=False))
    return out


def fit_gbm(X, y, X_val=None, y_val=None, params=GbmParams(), n_classes=None, threads=None):
    """Boost until the validation loss stalls for ``patience`` rounds or the cap is hit.

    With ``params.n_rounds`` set, exactly that many rounds are grown and no
    validation data is needed (used for refits on train + validation).
    Round ``r`` draws its row subsample from the stream (seed, r) and the
    level-wise feature samples of class ``k`` from (seed, r, k).
    """
    X = np.asarray(X, dtype=np.uint8)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ConfigurationError("empty training set")
    fixed = params.n_rounds is not None
    if not fixed and (X_val is None or len(y_val) == 0):
        raise ConfigurationError("a nonempty validation set is required for early stopping")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    n, p = X.shape
    cw = np.ones(K) if params.class_weights is None else np.asarray(params.class_weights)
    w = cw[y]
    base = _base_scores(y, w, K)
    n_out = 1 if K == 2 else K
    F = np.tile(base, (n, 1))
    if not fixed:
        X_val = np.asarray(X_val, dtype=np.uint8)
        y_val = np.asarray(y_val, dtype=np.int64)
        w_val = cw[y_val]
        F_val = np.tile(base, (len(y_val), 1))
    cap = params.n_rounds if fixed else params.ntrees_cap
    stopper = EarlyStopping(params.patience, cap)
    if not fixed:
        stopper.start(mean_logloss(_proba(F_val, K), y_val, w_val))
    n_sub = max(1, int(round(params.subsample * n)))
    rounds, history = [], []
    r = 0
    keep_going = cap > 0
    while keep_going:
        r += 1
        rng = np.random.default_rng([params.seed, r])
        rows = np.arange(n) if n_sub == n else np.sort(rng.choice(n, size=n_sub, replace=False))
        Gm, Hm = _grad_hess(F, y, w, K)

        def grow(k):
            lf = _level_features(np.random.default_rng([params.seed, r, k]), p,
                                 params.max_depth, params.colsample_bylevel)
            arrays = kernels.grow_gbm_tree(X, np.ascontiguousarray(Gm[:, k]), np.ascontiguousarray(Hm[:, k]),
                                           rows.astype(np.int64), lf, params.max_depth,
                                           float(params.min_child_weight), float(params.reg_lambda),
                                           float(params.learning_rate), float(params.gamma))
            return RegTree(*arrays)

        trees = pmap(grow, range(n_out), threads)
        for k, tree in enumerate(trees):
            F[:, k] += tree.predict(X)
        rounds.append(trees)
        train_loss = mean_logloss(_proba(F, K), y, w)
        if fixed:
            history.append((r, train_loss, float("nan")))
            keep_going = r < cap
        else:
            for k, tree in enumerate(trees):
                F_val[:, k] += tree.predict(X_val)
            val_loss = mean_logloss(_proba(F_val, K), y_val, w_val)
            history.append((r, train_loss, val_loss))
            keep_going = stopper.update(val_loss)
    best = len(rounds) if fixed else stopper.best_round
    return GbmModel(rounds, base, best, params, K, history)


def gain_importance(model, n_features, category=None):
    """Split gain times node cover, summed per feature and averaged over trees.

    With ``category`` only that class's trees count (multiclass models grow
    one tree per class and round).  Returns ``(scores, n_trees)``.
    """
    scores = np.zeros(n_features)
    n_trees = 0
    for trees in model.rounds[:model.best_round]:
        for k, tree in enumerate(trees):
            if category is not None and model.n_outputs > 1 and k != category:
                continue
            split = tree.feature >= 0
            scores += np.bincount(tree.feature[split], weights=tree.gain[split] * tree.cover[split],
                                  minlength=n_features)
            n_trees += 1
    return scores, n_trees


def gbm_gain_importance(model, n_features, category=None):
    scores, n_trees = gain_importance(model, n_features, category)
    raw = scores / max(n_trees, 1)
    return Importance(raw, normalize_to_max(raw))


def gbm_to_arrays(model):
    arrays = {"base_scores": model.base_scores}
    for r, trees in enumerate(model.rounds):
        for k, tree in enumerate(trees):
            arrays.update(tree.to_arrays(f"r{r}.{k}."))
    if model.history:
        arrays["history"] = np.array(model.history, dtype=np.float64)
    return arrays


def gbm_from_arrays(arrays, params, n_classes, n_rounds, best_round):
    n_out = 1 if n_classes == 2 else n_classes
    rounds = [[RegTree.from_arrays(arrays, f"r{r}.{k}.") for k in range(n_out)] for r in range(n_rounds)]
    history = [tuple(row) for row in arrays["history"]] if "history" in arrays else []
    history = [(int(a), b, c) for a, b, c in history]
    return GbmModel(rounds, arrays["base_scores"], best_round, params, n_classes, history)


def with_fixed_rounds(params, n_rounds):
    return replace(params, n_rounds=int(n_rounds))
