"""Logistic-regression meta-model over summed forest + boosting probabilities."""
import numpy as np

META_C = 0.2


def stack_features(p_forest, p_gbm, p_svm_onehot=None):
    """Elementwise sum of the two base distributions (not renormalized).

    ``p_svm_onehot`` appends the SVM's discrete vote as extra columns; it is
    an experimental input and off in every default path.
    """
    a = np.asarray(p_forest, dtype=np.float64)
    b = np.asarray(p_gbm, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"base predictions disagree in shape: {a.shape} vs {b.shape}")
    z = a + b
    if p_svm_onehot is not None:
        s = np.asarray(p_svm_onehot, dtype=np.float64)
        if s.shape != a.shape:
            raise ValueError("svm votes must match the base prediction shape")
        z = np.concatenate([z, s], axis=-1)
    return z


def _softmax(S):
    S = S - S.max(axis=1, keepdims=True)
    E = np.exp(S)
    return E / E.sum(axis=1, keepdims=True)


def _unpack(theta, d, K):
    W = theta[:K * d].reshape(K, d)
    b = theta[K * d:]
    return W, b


def meta_objective(theta, Z, y, C=META_C):
    """Penalized multinomial log loss and its gradient.

    ``sum_i -log softmax(W z_i + b)[y_i] + ||W||^2 / (2C)``; the bias is not
    penalized.  ``theta`` packs W (K x d, row-major) followed by b.
    """
    Z = np.asarray(Z, dtype=np.float64)
    n, d = Z.shape
    K = len(theta) // (d + 1)
    W, b = _unpack(theta, d, K)
    S = Z @ W.T + b
    S = S - S.max(axis=1, keepdims=True)
    logp = S - np.log(np.exp(S).sum(axis=1, keepdims=True))
    loss = -float(logp[np.arange(n), y].sum()) + float((W * W).sum()) / (2 * C)
    R = np.exp(logp)
    R[np.arange(n), y] -= 1.0
    gW = R.T @ Z + W / C
    gb = R.sum(axis=0)
    return loss, np.concatenate([gW.ravel(), gb])


def _hessian(theta, Z, C, K):
    n, d = Z.shape
    W, b = _unpack(theta, d, K)
    P = _softmax(Z @ W.T + b)
    Za = np.hstack([Z, np.ones((n, 1))])
    H = np.zeros((K, d + 1, K, d + 1))
    for k in range(K):
        for l in range(k, K):
            c = P[:, k] * ((k == l) - P[:, l])
            blk = (Za * c[:, None]).T @ Za
            H[k, :, l, :] = blk
            H[l, :, k, :] = blk.T
    H[np.arange(K)[:, None], np.arange(d)[None, :], np.arange(K)[:, None], np.arange(d)[None, :]] += 1.0 / C
    # reorder from (k, feature-or-bias) to the packed layout [W row-major, b]
    idx = np.concatenate([(np.arange(K)[:, None] * (d + 1) + np.arange(d)[None, :]).ravel(),
                          np.arange(K) * (d + 1) + d])
    H = H.reshape(K * (d + 1), K * (d + 1))
    return H[np.ix_(idx, idx)]


class StackModel:
    def __init__(self, W, b, C=META_C, base_fingerprints=(), use_svm=False, iterations=0, grad_norm=0.0):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.C = C
        self.base_fingerprints = tuple(base_fingerprints)
        self.use_svm = use_svm
        self.iterations = iterations
        self.grad_norm = grad_norm

    @property
    def n_classes(self):
        return self.W.shape[0]

    def scores(self, Z):
        return np.asarray(Z, dtype=np.float64) @ self.W.T + self.b


def fit_meta(Z, y, n_classes=None, C=META_C, tol=1e-6, max_iter=100, base_fingerprints=()):
    """Newton's method with backtracking on :func:`meta_objective`.

    Runs until the gradient norm drops below ``tol``.  Starts from zero, so
    the result depends only on the data.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    K = int(n_classes if n_classes is not None else y.max() + 1)
    if len(np.unique(y)) < 2:
        raise ValueError("meta-training labels contain a single class")
    n, d = Z.shape
    theta = np.zeros(K * (d + 1))
    f, g = meta_objective(theta, Z, y, C)
    it = 0
    while np.linalg.norm(g) >= tol and it < max_iter:
        it += 1
        H = _hessian(theta, Z, C, K)
        # softmax is invariant to a common bias shift; the tiny ridge fixes that direction
        step = np.linalg.solve(H + 1e-10 * np.eye(len(theta)), -g)
        t = 1.0
        while True:
            cand = theta + t * step
            fc, gc = meta_objective(cand, Z, y, C)
            if fc <= f + 1e-4 * t * float(g @ step) or t < 1e-12:
                break
            t *= 0.5
        theta, f, g = cand, fc, gc
    W, b = _unpack(theta, d, K)
    use_svm = d == 2 * K
    return StackModel(W, b, C, base_fingerprints, use_svm, it, float(np.linalg.norm(g)))


def predict_stacked(stack, p_forest, p_gbm, p_svm_onehot=None):
    """Meta distribution and argmax class (lowest index on ties)."""
    if stack.use_svm and p_svm_onehot is None:
        raise ValueError("this stack was trained with svm votes")
    Z = stack_features(p_forest, p_gbm, p_svm_onehot if stack.use_svm else None)
    P = _softmax(np.atleast_2d(stack.scores(Z)))
    return P, np.argmax(P, axis=1)


def stack_to_arrays(stack):
    return {"meta.W": stack.W, "meta.b": stack.b}


def stack_from_arrays(arrays, C, base_fingerprints, use_svm):
    return StackModel(arrays["meta.W"], arrays["meta.b"], C, base_fingerprints, use_svm)


def train_stack(X, y, X_val, y_val, forest_params, gbm_params, n_classes, svm_params=None,
                threads=None, forest_columns=None, gbm_columns=None):
    """Fit both base models on the training split and the meta-model on their validation forecasts.

    The boosting model uses the validation split for early stopping only.
    ``*_columns`` restrict a base model to a subset of attributes (other
    columns are zeroed); the complementary-experts scenario relies on this.
    Returns ``(stack, forest, gbm, svm)`` with ``svm`` None unless requested.
    """
    from .forest import fit_forest
    from .gbm import fit_gbm
    from .svm import fit_linear_svm

    fz = column_view(forest_columns)
    gz = column_view(gbm_columns)
    forest = fit_forest(fz(X), y, forest_params, n_classes=n_classes, threads=threads)
    gbm = fit_gbm(gz(X), y, gz(X_val), y_val, gbm_params, n_classes=n_classes, threads=threads)
    svm = None
    votes = None
    if svm_params is not None:
        svm = fit_linear_svm(X, y, svm_params, n_classes=n_classes, threads=threads)
        votes = svm.predict_onehot(X_val)
    Z = stack_features(forest.predict_proba(fz(X_val)), gbm.predict_proba(gz(X_val)), votes)
    stack = fit_meta(Z, y_val, n_classes)
    stack.forest_columns = forest_columns
    stack.gbm_columns = gbm_columns
    return stack, forest, gbm, svm


def column_view(columns):
    """Function zeroing every attribute outside ``columns`` (identity for None)."""
    if columns is None:
        return lambda X: X
    cols = np.asarray(columns)

    def view(X):
        Z = np.zeros_like(X)
        Z[:, cols] = X[:, cols]
        return Z
    return view


def predict_stack_models(stack, forest, gbm, X, svm=None):
    fz = column_view(getattr(stack, "forest_columns", None))
    gz = column_view(getattr(stack, "gbm_columns", None))
    votes = svm.predict_onehot(X) if (stack.use_svm and svm is not None) else None
    return predict_stacked(stack, forest.predict_proba(fz(X)), gbm.predict_proba(gz(X)), votes)
