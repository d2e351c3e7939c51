"""Confusion matrices, per-class precision / recall / F1 and the random baseline."""
from dataclasses import dataclass

import numpy as np


def confusion_matrix(y_true, y_pred, K):
    """``C[i, j]`` counts cases of true class ``i`` predicted as ``j``."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        bad = np.flatnonzero((arr < 0) | (arr >= K))
        if bad.size:
            raise ValueError(f"{name}[{bad[0]}] = {arr[bad[0]]} is outside 0..{K - 1}")
    return np.bincount(y_true * K + y_pred, minlength=K * K).reshape(K, K)


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def f1_from(precision, recall):
    p = np.asarray(precision, dtype=np.float64)
    r = np.asarray(recall, dtype=np.float64)
    return np.divide(2 * p * r, p + r, out=np.zeros_like(p), where=(p > 0) & (r > 0))


@dataclass
class ClassScores:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @property
    def macro_precision(self):
        return float(self.precision.mean())

    @property
    def macro_recall(self):
        return float(self.recall.mean())

    @property
    def macro_f1(self):
        return float(self.f1.mean())


def precision_recall_f1(C):
    """Per-class scores from a confusion matrix; zero denominators give 0."""
    C = np.asarray(C)
    d = np.diag(C)
    p = _ratio(d, C.sum(axis=0))
    r = _ratio(d, C.sum(axis=1))
    return ClassScores(p, r, f1_from(p, r))


def score_predictions(y_true, y_pred, K):
    return precision_recall_f1(confusion_matrix(y_true, y_pred, K))


def micro_recall(C):
    C = np.asarray(C)
    return float(np.trace(C) / C.sum()) if C.sum() else 0.0


def random_baseline(train_counts, test_labels, seed=0, trials=1000, chunk=256):
    """Scores of guessing classes in proportion to their training frequency.

    Precision, recall and F1 are averaged over ``trials`` independent draws
    of the whole test set.
    """
    counts = np.asarray(train_counts, dtype=np.float64)
    if counts.ndim != 1 or (counts <= 0).any():
        raise ValueError("training counts must all be positive")
    K = len(counts)
    y = np.asarray(test_labels, dtype=np.int64)
    cdf = np.cumsum(counts / counts.sum())
    cdf[-1] = 1.0
    rng = np.random.default_rng(seed)
    acc_p = np.zeros(K)
    acc_r = np.zeros(K)
    acc_f = np.zeros(K)
    true_counts = np.bincount(y, minlength=K).astype(np.float64)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        pred = np.searchsorted(cdf, rng.random((m, len(y))), side="right")
        pred = np.minimum(pred, K - 1)
        hits = (pred == y[None, :])
        tp = np.stack([(hits & (y[None, :] == k)).sum(axis=1) for k in range(K)], axis=1)
        npred = np.stack([(pred == k).sum(axis=1) for k in range(K)], axis=1)
        p = _ratio(tp, npred)
        r = _ratio(tp, np.broadcast_to(true_counts, tp.shape))
        acc_p += p.sum(axis=0)
        acc_r += r.sum(axis=0)
        acc_f += f1_from(p, r).sum(axis=0)
        done += m
    return ClassScores(acc_p / trials, acc_r / trials, acc_f / trials)
