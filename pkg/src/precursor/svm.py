"""One-vs-rest linear SVM (L1 hinge, L2 penalty) solved by dual coordinate descent."""
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import kernels
from ._parallel import pmap


def svm_c_grid(n=800, lo=-7.0, hi=7.0):
    """``10**x`` for ``n`` evenly spaced exponents in ``[lo, hi]``."""
    return 10.0 ** np.linspace(lo, hi, n)


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    class_weights: Optional[tuple] = None
    max_iter: int = 10000
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if self.max_iter < 1 or not self.tol > 0:
            raise ValueError("max_iter must be >= 1 and tol > 0")
        if self.class_weights is not None:
            object.__setattr__(self, "class_weights", tuple(float(w) for w in self.class_weights))

    def to_json(self):
        d = asdict(self)
        if d["class_weights"] is not None:
            d["class_weights"] = list(d["class_weights"])
        return d


@dataclass
class BinarySolution:
    w: np.ndarray
    b: float
    alpha: np.ndarray
    epochs: int
    converged: bool
    objective_trace: list  # dual objective in minimisation form, one value per epoch


class SvmModel:
    def __init__(self, W, b, params, n_classes, converged=None, epochs=None):
        self.W = np.asarray(W, dtype=np.float64)  # (K, p)
        self.b = np.asarray(b, dtype=np.float64)  # (K,)
        self.params = params
        self.n_classes = n_classes
        self.converged = np.ones(n_classes, dtype=bool) if converged is None else np.asarray(converged, bool)
        self.epochs = np.zeros(n_classes, dtype=np.int64) if epochs is None else np.asarray(epochs, np.int64)

    @property
    def warning(self):
        """True when any one-vs-rest problem hit ``max_iter`` before meeting ``tol``."""
        return not bool(self.converged.all())

    def decision_values(self, X):
        return decision_values(self, X)

    def predict(self, X):
        return np.argmax(self.decision_values(X), axis=1)

    def predict_onehot(self, X):
        out = np.zeros((np.asarray(X).shape[0], self.n_classes))
        out[np.arange(out.shape[0]), self.predict(X)] = 1.0
        return out


def _augment(X):
    X = np.asarray(X, dtype=np.float64)
    return np.ascontiguousarray(np.hstack([X, np.ones((X.shape[0], 1))]))


def dual_objective(alpha, w):
    """``0.5 * |w|^2 - sum(alpha)`` for ``w = sum_i alpha_i y_i x_i``."""
    return 0.5 * float(w @ w) - float(alpha.sum())


def solve_binary(X, y, upper, seed=0, max_iter=10000, tol=1e-4, augmented=False):
    """Dual coordinate descent for one +/-1 problem.

    ``upper[i]`` is the box bound ``C * weight_i``.  The bias is the weight of
    an appended constant feature.  Stops once every projected gradient seen in
    an epoch lies within ``tol`` of zero.
    """
    Xa = np.ascontiguousarray(X, dtype=np.float64) if augmented else _augment(X)
    y = np.asarray(y, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    n = Xa.shape[0]
    qii = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n)
    w = np.zeros(Xa.shape[1])
    rng = np.random.default_rng(seed)
    trace = []
    converged = False
    epoch = 0
    while epoch < max_iter:
        epoch += 1
        order = rng.permutation(n).astype(np.int64)
        pg_max, pg_min = kernels.dual_cd_epoch(Xa, y, upper, qii, order, alpha, w)
        trace.append(dual_objective(alpha, w))
        # spread taken against 0 so equal nonzero gradients do not pass as converged
        if max(pg_max, 0.0) - min(pg_min, 0.0) < tol:
            converged = True
            break
    return BinarySolution(w[:-1].copy(), float(w[-1]), alpha, epoch, converged, trace)


def fit_linear_svm(X, y, params=SvmParams(), n_classes=None, category_names=None, threads=None):
    """Fit one (w, b) per class against the rest.

    Each example's box bound is ``C`` times the weight of its own class.
    Class ``k`` shuffles its coordinates with the stream (seed, k).
    """
    X = np.asarray(X)
    y = np.asarray(y, dtype=np.int64)
    K = int(n_classes if n_classes is not None else y.max() + 1)
    if K < 2:
        raise ValueError("need at least two categories")
    counts = np.bincount(y, minlength=K)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        names = category_names or [str(k) for k in range(K)]
        raise ValueError(f"category {names[missing[0]]!r} has no training examples")
    cw = np.ones(K) if params.class_weights is None else np.asarray(params.class_weights, dtype=np.float64)
    upper = params.C * cw[y]
    Xa = _augment(X)

    def one(k):
        yk = np.where(y == k, 1.0, -1.0)
        return solve_binary(Xa, yk, upper, seed=[params.seed, k], max_iter=params.max_iter,
                            tol=params.tol, augmented=True)

    sols = pmap(one, range(K), threads)
    return SvmModel(np.array([s.w for s in sols]), np.array([s.b for s in sols]), params, K,
                    [s.converged for s in sols], [s.epochs for s in sols])


def decision_values(model, X):
    """``w_k . x + b_k`` per class."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    return X @ model.W.T + model.b


def class_attribute_contributions(model, category, k=6, names=None):
    """The ``k`` largest and ``k`` most negative coefficients of one class.

    Returns ``{"top_k": [(name, coef), ...], "bottom_k": [...]}``; ties keep
    attribute order.
    """
    w = model.W[category]
    if not 0 <= k <= len(w):
        raise ValueError("k out of range")
    names = names if names is not None else [str(j) for j in range(len(w))]
    top = np.argsort(-w, kind="stable")[:k]
    bottom = np.argsort(w, kind="stable")[:k]
    return {"top_k": [(names[j], float(w[j])) for j in top],
            "bottom_k": [(names[j], float(w[j])) for j in bottom]}


def svm_to_arrays(model):
    return {"W": model.W, "b": model.b, "converged": model.converged.astype(np.uint8),
            "epochs": model.epochs}


def svm_from_arrays(arrays, params, n_classes):
    return SvmModel(arrays["W"], arrays["b"], params, n_classes,
                    arrays["converged"].astype(bool), arrays["epochs"])
