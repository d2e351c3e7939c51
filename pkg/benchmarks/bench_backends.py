"""Compare the numba kernels with the pure-numpy fallback.

    python3 benchmarks/bench_backends.py [--quick]

Times each hot kernel on both backends (after a warm-up call so JIT
compilation is excluded), checks that the two agree, and records how
linear-SVM fit time grows with the number of training cases.
"""
import argparse
import time

import numpy as np

from precursor import kernels
from precursor.svm import SvmParams, fit_linear_svm


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(n, p=80, K=6, seed=0):
    rng = np.random.default_rng(seed)
    X = (rng.random((n, p)) < 0.05).astype(np.uint8)
    y = (X[:, :K].argmax(axis=1) * X[:, :K].max(axis=1)).astype(np.int64)
    return X, y


def kernel_jobs(n):
    X, y = cases(n)
    K = int(y.max()) + 1
    w = np.ones(n)
    rows = np.arange(n, dtype=np.int64)
    rng = np.random.default_rng(1)
    g = rng.normal(size=n)
    h = rng.random(n) + 0.1
    lf = np.tile(np.arange(80, dtype=np.int64), (6, 1))
    Xf = np.hstack([X.astype(np.float64), np.ones((n, 1))])
    ys = np.where(y == 1, 1.0, -1.0)
    qii = (Xf * Xf).sum(axis=1)
    order = rng.permutation(n).astype(np.int64)

    def tree(impl):
        return lambda: impl.grow_binary_tree(X, y, w, rows, K, -1, 1, 9, np.uint64(12345))

    def gbm_tree(impl):
        return lambda: impl.grow_gbm_tree(X, g, h, rows, lf, 6, 1.0, 1.0, 0.1)

    def svm_epoch(impl):
        def run():
            alpha = np.zeros(n)
            wv = np.zeros(Xf.shape[1])
            for _ in range(5):
                impl.dual_cd_epoch(Xf, ys, np.full(n, 1.0), qii, order, alpha, wv)
            return alpha
        return run

    return {"cart tree (mtry 9)": tree, "boosting tree (depth 6)": gbm_tree, "svm 5 epochs": svm_epoch}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="smaller problems, fewer repeats")
    args = ap.parse_args(argv)
    n = 1000 if args.quick else 4000
    repeat = 2 if args.quick else 5
    if kernels.numba_impl is None:
        print("numba is not importable; only the numpy backend can run")
    print(f"kernel timings, n={n}, best of {repeat} (seconds)")
    print(f"{'kernel':26s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}  agree")
    for name, job in kernel_jobs(n).items():
        t_np = best_of(job(kernels.numpy_impl), repeat)
        if kernels.numba_impl is None:
            print(f"{name:26s} {t_np:10.4f} {'-':>10s}")
            continue
        job(kernels.numba_impl)()  # compile
        t_nb = best_of(job(kernels.numba_impl), repeat)
        a, b = job(kernels.numpy_impl)(), job(kernels.numba_impl)()
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        agree = all(np.allclose(u, v, rtol=1e-9, atol=1e-12) for u, v in zip(a, b))
        print(f"{name:26s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f}  {agree}")

    print()
    print(f"linear svm fit time vs n (backend: {kernels.BACKEND}, C=1e-3 and C=1)")
    sizes = (500, 1000, 2000) if args.quick else (1000, 2000, 4000, 8000)
    for C in (1e-3, 1.0):
        prev = None
        for m in sizes:
            X, y = cases(m, seed=2)
            t = best_of(lambda: fit_linear_svm(X, y, SvmParams(C=C)), 1 if args.quick else 2)
            ratio = "" if prev is None else f"x{t / prev:.2f} for x2 cases"
            print(f"  C={C:<6g} n={m:<6d} {t:8.4f}s {ratio}")
            prev = t


if __name__ == "__main__":
    main()
