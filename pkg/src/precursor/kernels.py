"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba versions are used when numba imports and PRECURSOR_DISABLE_NUMBA
is unset.  Both implementations are always importable from ``numpy_impl`` and
``numba_impl`` (the latter is None without numba) so benchmarks and tests can
compare them directly.
"""
from types import SimpleNamespace

import numpy as np

from ._config import numba_requested

# Gains closer than this are ties (first candidate wins); gains at or below
# MIN_GAIN do not justify a split.
GAIN_TIE_TOL = 1e-12
MIN_GAIN = 1e-12

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


# --------------------------------------------------------------------------
# pure numpy

def _feature_sums_np(X, rows, feats, V):
    sub = X[np.ix_(rows, feats)].astype(np.float64)
    return sub.T @ V[rows]


def _apply_tree_np(feature, threshold, left, right, X):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    while active.size:
        f = feature[node[active]]
        internal = f >= 0
        active = active[internal]
        if not active.size:
            break
        cur = node[active]
        go_right = X[active, feature[cur]] > threshold[cur]
        node[active] = np.where(go_right, right[cur], left[cur])
    return node


def _dual_cd_epoch_np(X, y, upper, qii, order, alpha, w):
    pg_max = -np.inf
    pg_min = np.inf
    for i in order:
        xi = X[i]
        g = y[i] * float(xi @ w) - 1.0
        a = alpha[i]
        if a == 0.0:
            pg = min(g, 0.0)
        elif a == upper[i]:
            pg = max(g, 0.0)
        else:
            pg = g
        pg_max = max(pg_max, pg)
        pg_min = min(pg_min, pg)
        if pg != 0.0:
            new = min(max(a - g / qii[i], 0.0), upper[i])
            alpha[i] = new
            w += (new - a) * y[i] * xi
    return pg_max, pg_min


_MASK64 = (1 << 64) - 1


def _splitmix_next_py(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _sample_features_np(state, p, m):
    """Sorted ``m`` of ``p`` feature indices by partial Fisher-Yates; returns (state, idx)."""
    arr = list(range(p))
    for i in range(m):
        state, z = _splitmix_next_py(state)
        j = i + z % (p - i)
        arr[i], arr[j] = arr[j], arr[i]
    return state, np.sort(np.array(arr[:m], dtype=np.int64))


def _grow_binary_tree_np(X, y, w, rows, K, max_depth, min_leaf, mtry, state):
    p = X.shape[1]
    m = mtry if 0 < mtry < p else p
    V = np.zeros((len(y), K + 1))
    V[np.arange(len(y)), y] = w
    V[:, K] = 1.0
    nodes = []
    state = int(state)

    def grow(rows, depth):
        nonlocal state
        counts = np.bincount(y[rows], weights=w[rows], minlength=K)
        tot = counts.sum()
        pk = counts / tot
        g = 1.0 - float(np.dot(pk, pk))
        node = [-1, -1, -1, counts, len(rows), g]
        idx = len(nodes)
        nodes.append(node)
        if g <= 0.0 or (max_depth >= 0 and depth >= max_depth) or len(rows) < 2 * min_leaf:
            return idx
        if m < p:
            state, cand = _sample_features_np(state, p, m)
        else:
            cand = np.arange(p, dtype=np.int64)
        sums = _feature_sums_np(X, rows, cand, V)
        right = sums[:, :K]
        n_right = np.rint(sums[:, K]).astype(np.int64)
        n_left = len(rows) - n_right
        ok = (n_right >= min_leaf) & (n_left >= min_leaf)
        if not ok.any():
            return idx
        left = counts[None, :] - right
        wl = left.sum(axis=1)
        wr = right.sum(axis=1)
        gains = np.full(len(cand), -np.inf)
        k = np.flatnonzero(ok)
        pl = left[k] / wl[k, None]
        pr = right[k] / wr[k, None]
        gl = 1.0 - (pl * pl).sum(axis=1)
        gr = 1.0 - (pr * pr).sum(axis=1)
        gains[k] = g - (wl[k] * gl + wr[k] * gr) / tot
        top = gains.max()
        if not top > MIN_GAIN:
            return idx
        a = int(np.flatnonzero(gains >= top - GAIN_TIE_TOL * max(1.0, abs(top)))[0])
        f = int(cand[a])
        go_right = X[rows, f] != 0
        node[0] = f
        node[1] = grow(rows[~go_right], depth + 1)
        node[2] = grow(rows[go_right], depth + 1)
        return idx

    grow(np.asarray(rows, dtype=np.int64), 0)
    n = len(nodes)
    feature = np.array([nd[0] for nd in nodes], dtype=np.int64)
    left = np.array([nd[1] for nd in nodes], dtype=np.int64)
    right = np.array([nd[2] for nd in nodes], dtype=np.int64)
    value = np.array([nd[3] for nd in nodes]).reshape(n, K)
    nsamp = np.array([nd[4] for nd in nodes], dtype=np.int64)
    imp = np.array([nd[5] for nd in nodes])
    return feature, left, right, value, nsamp, imp


def _split_score(G, H, lam):
    d = H + lam
    return G * G / d if d > 0.0 else 0.0


def _grow_gbm_tree_np(X, g, h, rows, level_feats, max_depth, min_child_weight, lam, lr, gamma=0.0):
    V = np.stack([g, h, np.ones_like(g)], axis=1)
    nodes = []

    def grow(rows, depth):
        G = float(g[rows].sum())
        H = float(h[rows].sum())
        d = H + lam
        node = [-1, -1, -1, (-G / d if d > 0.0 else 0.0) * lr, 0.0, H]
        idx = len(nodes)
        nodes.append(node)
        if depth >= max_depth or len(rows) < 2:
            return idx
        cand = level_feats[depth]
        cand = cand[cand >= 0]
        sums = _feature_sums_np(X, rows, cand, V)
        GR, HR, NR = sums[:, 0], sums[:, 1], np.rint(sums[:, 2])
        GL, HL, NL = G - GR, H - HR, len(rows) - NR
        ok = (HL >= min_child_weight) & (HR >= min_child_weight) & (NL > 0) & (NR > 0)
        if not ok.any():
            return idx
        parent = _split_score(G, H, lam)
        gains = np.full(len(cand), -np.inf)
        for a in np.flatnonzero(ok):
            gains[a] = 0.5 * (_split_score(GL[a], HL[a], lam) + _split_score(GR[a], HR[a], lam) - parent)
        top = gains.max()
        if not top > max(MIN_GAIN, gamma):
            return idx
        a = int(np.flatnonzero(gains >= top - GAIN_TIE_TOL * max(1.0, abs(top)))[0])
        f = int(cand[a])
        go_right = X[rows, f] != 0
        node[0] = f
        node[4] = float(gains[a])
        node[1] = grow(rows[~go_right], depth + 1)
        node[2] = grow(rows[go_right], depth + 1)
        return idx

    grow(np.asarray(rows, dtype=np.int64), 0)
    cols = list(zip(*nodes))
    return (np.array(cols[0], dtype=np.int64), np.array(cols[1], dtype=np.int64),
            np.array(cols[2], dtype=np.int64), np.array(cols[3], dtype=np.float64),
            np.array(cols[4], dtype=np.float64), np.array(cols[5], dtype=np.float64))


numpy_impl = SimpleNamespace(
    name="numpy",
    feature_sums=_feature_sums_np,
    apply_tree=_apply_tree_np,
    dual_cd_epoch=_dual_cd_epoch_np,
    sample_features=_sample_features_np,
    grow_binary_tree=_grow_binary_tree_np,
    grow_gbm_tree=_grow_gbm_tree_np,
)


# --------------------------------------------------------------------------
# numba

def _build_numba_impl():
    njit = numba.njit(cache=True, nogil=True)

    @njit
    def feature_sums(X, rows, feats, V):
        nf = feats.shape[0]
        nc = V.shape[1]
        out = np.zeros((nf, nc))
        for a in range(nf):
            f = feats[a]
            for r in rows:
                if X[r, f] != 0:
                    for c in range(nc):
                        out[a, c] += V[r, c]
        return out

    @njit
    def apply_tree(feature, threshold, left, right, X):
        n = X.shape[0]
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if X[i, feature[node]] > threshold[node]:
                    node = right[node]
                else:
                    node = left[node]
            out[i] = node
        return out

    @njit
    def dual_cd_epoch(X, y, upper, qii, order, alpha, w):
        pg_max = -np.inf
        pg_min = np.inf
        p = X.shape[1]
        for i in order:
            g = 0.0
            for j in range(p):
                g += X[i, j] * w[j]
            g = y[i] * g - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == upper[i]:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0:
                new = min(max(a - g / qii[i], 0.0), upper[i])
                alpha[i] = new
                step = (new - a) * y[i]
                for j in range(p):
                    w[j] += step * X[i, j]
        return pg_max, pg_min

    @njit
    def splitmix_next(state):
        # state: one-element uint64 array, advanced in place
        s = state[0] + np.uint64(0x9E3779B97F4A7C15)
        state[0] = s
        z = s
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))

    @njit
    def sample_into(state, arr, p, m):
        for i in range(p):
            arr[i] = i
        for i in range(m):
            z = splitmix_next(state)
            j = i + np.int64(z % np.uint64(p - i))
            t = arr[i]
            arr[i] = arr[j]
            arr[j] = t
        arr[:m].sort()

    def sample_features(state, p, m):
        st = np.array([state], dtype=np.uint64)
        arr = np.empty(p, dtype=np.int64)
        sample_into(st, arr, p, m)
        return int(st[0]), arr[:m].copy()

    @njit
    def grow_binary_tree(X, y, w, rows, K, max_depth, min_leaf, mtry, state0):
        n = rows.shape[0]
        p = X.shape[1]
        m = mtry if 0 < mtry < p else p
        cap = 2 * n
        feature = np.full(cap, -1, dtype=np.int64)
        left = np.full(cap, -1, dtype=np.int64)
        right = np.full(cap, -1, dtype=np.int64)
        value = np.zeros((cap, K))
        nsamp = np.zeros(cap, dtype=np.int64)
        imp = np.zeros(cap)
        buf = rows.copy()
        tmp = np.empty(n, dtype=np.int64)
        st_s = np.empty(cap, dtype=np.int64)
        st_e = np.empty(cap, dtype=np.int64)
        st_d = np.empty(cap, dtype=np.int64)
        st_par = np.empty(cap, dtype=np.int64)
        st_side = np.empty(cap, dtype=np.int64)
        state = np.array([state0], dtype=np.uint64)
        cand = np.empty(p, dtype=np.int64)
        counts = np.empty(K)
        rc = np.empty(K)
        gains = np.empty(p)
        top = 0
        st_s[0] = 0
        st_e[0] = n
        st_d[0] = 0
        st_par[0] = -1
        st_side[0] = 0
        top = 1
        n_nodes = 0
        while top > 0:
            top -= 1
            s = st_s[top]
            e = st_e[top]
            d = st_d[top]
            par = st_par[top]
            node = n_nodes
            n_nodes += 1
            if par >= 0:
                if st_side[top] == 0:
                    left[par] = node
                else:
                    right[par] = node
            counts[:] = 0.0
            for i in range(s, e):
                r = buf[i]
                counts[y[r]] += w[r]
            tot = 0.0
            for k in range(K):
                tot += counts[k]
            g = 1.0
            for k in range(K):
                q = counts[k] / tot
                g -= q * q
            value[node, :] = counts
            nsamp[node] = e - s
            imp[node] = g
            if g <= 0.0 or (max_depth >= 0 and d >= max_depth) or (e - s) < 2 * min_leaf:
                continue
            if m < p:
                sample_into(state, cand, p, m)
            else:
                for i in range(p):
                    cand[i] = i
            best = -np.inf
            for a in range(m):
                f = cand[a]
                rc[:] = 0.0
                nr = 0
                for i in range(s, e):
                    r = buf[i]
                    if X[r, f] != 0:
                        rc[y[r]] += w[r]
                        nr += 1
                nl = (e - s) - nr
                if nr < min_leaf or nl < min_leaf:
                    gains[a] = -np.inf
                    continue
                wl = 0.0
                wr = 0.0
                for k in range(K):
                    wl += counts[k] - rc[k]
                    wr += rc[k]
                gl = 1.0
                gr = 1.0
                for k in range(K):
                    ql = (counts[k] - rc[k]) / wl
                    qr = rc[k] / wr
                    gl -= ql * ql
                    gr -= qr * qr
                gains[a] = g - (wl * gl + wr * gr) / tot
                if gains[a] > best:
                    best = gains[a]
            if not best > MIN_GAIN:
                continue
            thr = best - GAIN_TIE_TOL * max(1.0, abs(best))
            f = -1
            for a in range(m):
                if gains[a] >= thr:
                    f = cand[a]
                    break
            feature[node] = f
            nl = 0
            for i in range(s, e):
                r = buf[i]
                if X[r, f] == 0:
                    tmp[nl] = r
                    nl += 1
            j = nl
            for i in range(s, e):
                r = buf[i]
                if X[r, f] != 0:
                    tmp[j] = r
                    j += 1
            for i in range(e - s):
                buf[s + i] = tmp[i]
            mid = s + nl
            st_s[top] = mid
            st_e[top] = e
            st_d[top] = d + 1
            st_par[top] = node
            st_side[top] = 1
            top += 1
            st_s[top] = s
            st_e[top] = mid
            st_d[top] = d + 1
            st_par[top] = node
            st_side[top] = 0
            top += 1
        return (feature[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy(),
                value[:n_nodes].copy(), nsamp[:n_nodes].copy(), imp[:n_nodes].copy())

    def grow_binary_tree_entry(X, y, w, rows, K, max_depth, min_leaf, mtry, state):
        return grow_binary_tree(X, y, w, rows, K, max_depth, min_leaf, mtry, np.uint64(state))

    @njit
    def split_score(G, H, lam):
        d = H + lam
        return G * G / d if d > 0.0 else 0.0

    @njit
    def grow_gbm_tree(X, g, h, rows, level_feats, max_depth, min_child_weight, lam, lr, gamma=0.0):
        n = rows.shape[0]
        cap = 2 * n + 1
        feature = np.full(cap, -1, dtype=np.int64)
        left = np.full(cap, -1, dtype=np.int64)
        right = np.full(cap, -1, dtype=np.int64)
        value = np.zeros(cap)
        gain = np.zeros(cap)
        cover = np.zeros(cap)
        buf = rows.copy()
        tmp = np.empty(n, dtype=np.int64)
        st_s = np.empty(cap, dtype=np.int64)
        st_e = np.empty(cap, dtype=np.int64)
        st_d = np.empty(cap, dtype=np.int64)
        st_par = np.empty(cap, dtype=np.int64)
        st_side = np.empty(cap, dtype=np.int64)
        gains = np.empty(level_feats.shape[1])
        st_s[0] = 0
        st_e[0] = n
        st_d[0] = 0
        st_par[0] = -1
        st_side[0] = 0
        top = 1
        n_nodes = 0
        while top > 0:
            top -= 1
            s = st_s[top]
            e = st_e[top]
            d = st_d[top]
            par = st_par[top]
            node = n_nodes
            n_nodes += 1
            if par >= 0:
                if st_side[top] == 0:
                    left[par] = node
                else:
                    right[par] = node
            G = 0.0
            H = 0.0
            for i in range(s, e):
                r = buf[i]
                G += g[r]
                H += h[r]
            den = H + lam
            value[node] = (-G / den if den > 0.0 else 0.0) * lr
            cover[node] = H
            if d >= max_depth or (e - s) < 2:
                continue
            parent = split_score(G, H, lam)
            best = -np.inf
            nc = level_feats.shape[1]
            for a in range(nc):
                f = level_feats[d, a]
                if f < 0:
                    gains[a] = -np.inf
                    continue
                GR = 0.0
                HR = 0.0
                nr = 0
                for i in range(s, e):
                    r = buf[i]
                    if X[r, f] != 0:
                        GR += g[r]
                        HR += h[r]
                        nr += 1
                HL = H - HR
                if HL < min_child_weight or HR < min_child_weight or nr == 0 or nr == e - s:
                    gains[a] = -np.inf
                    continue
                gains[a] = 0.5 * (split_score(G - GR, HL, lam) + split_score(GR, HR, lam) - parent)
                if gains[a] > best:
                    best = gains[a]
            if not best > max(MIN_GAIN, gamma):
                continue
            thr = best - GAIN_TIE_TOL * max(1.0, abs(best))
            f = -1
            for a in range(nc):
                if gains[a] >= thr:
                    f = level_feats[d, a]
                    gain[node] = gains[a]
                    break
            feature[node] = f
            nl = 0
            for i in range(s, e):
                r = buf[i]
                if X[r, f] == 0:
                    tmp[nl] = r
                    nl += 1
            j = nl
            for i in range(s, e):
                r = buf[i]
                if X[r, f] != 0:
                    tmp[j] = r
                    j += 1
            for i in range(e - s):
                buf[s + i] = tmp[i]
            mid = s + nl
            st_s[top] = mid
            st_e[top] = e
            st_d[top] = d + 1
            st_par[top] = node
            st_side[top] = 1
            top += 1
            st_s[top] = s
            st_e[top] = mid
            st_d[top] = d + 1
            st_par[top] = node
            st_side[top] = 0
            top += 1
        return (feature[:n_nodes].copy(), left[:n_nodes].copy(), right[:n_nodes].copy(),
                value[:n_nodes].copy(), gain[:n_nodes].copy(), cover[:n_nodes].copy())

    return SimpleNamespace(
        name="numba",
        feature_sums=feature_sums,
        apply_tree=apply_tree,
        dual_cd_epoch=dual_cd_epoch,
        sample_features=sample_features,
        grow_binary_tree=grow_binary_tree_entry,
        grow_gbm_tree=grow_gbm_tree,
    )


numba_impl = _build_numba_impl() if numba is not None else None

active = numba_impl if (numba_impl is not None and numba_requested()) else numpy_impl
BACKEND = active.name


def feature_sums(X, rows, feats, V):
    """Column sums of ``V[rows]`` restricted to rows where each feature is set.

    Returns an array of shape ``(len(feats), V.shape[1])``.  ``X`` is the
    binary design matrix; a nonzero entry counts as "set".
    """
    return active.feature_sums(X, rows, feats, V)


def apply_tree(feature, threshold, left, right, X):
    """Leaf index reached by every row of ``X`` (``x > threshold`` goes right)."""
    return active.apply_tree(feature, threshold, left, right, X)


def dual_cd_epoch(X, y, upper, qii, order, alpha, w):
    """One pass of hinge-loss dual coordinate descent; updates alpha, w in place.

    Returns the max and min projected gradient seen during the pass.
    """
    return active.dual_cd_epoch(X, y, upper, qii, order, alpha, w)


def sample_features(state, p, m):
    """Draw ``m`` of ``p`` features from a splitmix64 stream; returns (new_state, sorted idx)."""
    return active.sample_features(state, p, m)


def grow_binary_tree(X, y, w, rows, K, max_depth, min_leaf, mtry, state):
    """Grow a CART tree on binary features; returns pre-order node arrays.

    ``max_depth < 0`` means unbounded and ``mtry <= 0`` means all features.
    Output: feature, left, right, value (weighted class counts), n_samples,
    impurity.
    """
    return active.grow_binary_tree(X, y, w, rows, K, max_depth, min_leaf, mtry, state)


def grow_gbm_tree(X, g, h, rows, level_feats, max_depth, min_child_weight, lam, lr, gamma=0.0):
    """Grow one second-order boosting tree on binary features.

    ``level_feats[d]`` lists the candidate features at depth ``d`` (padded
    with -1).  A split needs gain above ``gamma``.  Leaf values are
    ``-lr * G / (H + lam)``.  Output: feature,
    left, right, value, gain, cover (hessian sum) per node in pre-order.
    """
    return active.grow_gbm_tree(X, g, h, rows, level_feats, max_depth, min_child_weight, lam, lr, gamma)
