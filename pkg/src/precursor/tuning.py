"""Hyperparameter grids, model-family dispatch and validation grid search."""
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import pmap
from .forest import ForestParams, fit_forest, NTREE_GRID, MTRY_GRID, NODESIZE_GRID
from .gbm import (GbmParams, fit_gbm, MAX_DEPTH_GRID, LEARNING_RATE_GRID, MIN_CHILD_WEIGHT_GRID,
                  SUBSAMPLE_GRID, COLSAMPLE_BYLEVEL_GRID)
from .metrics import score_predictions
from .svm import SvmParams, fit_linear_svm, svm_c_grid

FAMILIES = ("forest", "gbm", "svm")


def rf_grid():
    return [{"ntree": t, "mtry": m, "nodesize": s}
            for t, m, s in itertools.product(NTREE_GRID, MTRY_GRID, NODESIZE_GRID)]


def gbm_grid():
    return [{"max_depth": d, "learning_rate": lr, "min_child_weight": mcw,
             "subsample": ss, "colsample_bylevel": cs}
            for d, lr, mcw, ss, cs in itertools.product(MAX_DEPTH_GRID, LEARNING_RATE_GRID,
                                                       MIN_CHILD_WEIGHT_GRID, SUBSAMPLE_GRID,
                                                       COLSAMPLE_BYLEVEL_GRID)]


def svm_grid():
    return [{"C": float(c)} for c in svm_c_grid()]


def default_grid(family):
    return {"forest": rf_grid, "gbm": gbm_grid, "svm": svm_grid}[family]()


def make_params(family, config, seed=0, class_weights=None):
    """Family parameter object from a plain dict (as read from JSON)."""
    cfg = dict(config)
    cfg.pop("seed", None)
    cw = None if class_weights is None else tuple(float(w) for w in class_weights)
    if family == "forest":
        return ForestParams(seed=seed, class_weights=cw, **cfg)
    if family == "gbm":
        cfg["class_weights"] = cw
        cfg["seed"] = seed
        return GbmParams.from_json(cfg)
    if family == "svm":
        return SvmParams(seed=seed, class_weights=cw, **cfg)
    raise ValueError(f"unknown model family {family!r}")


def fit_family(family, params, X, y, X_val=None, y_val=None, n_classes=None, threads=None):
    if family == "forest":
        return fit_forest(X, y, params, n_classes=n_classes, threads=threads)
    if family == "gbm":
        return fit_gbm(X, y, X_val, y_val, params, n_classes=n_classes, threads=threads)
    if family == "svm":
        return fit_linear_svm(X, y, params, n_classes=n_classes, threads=threads)
    raise ValueError(f"unknown model family {family!r}")


def predict_family(model, X):
    """Discrete predictions for any fitted family."""
    return model.predict(X)


@dataclass
class GridRow:
    index: int
    config: dict
    val_macro_f1: float
    rank: int = 0
    error: str = ""
    best_round: int = -1


@dataclass
class GridSearchResult:
    family: str
    rows: list
    best: GridRow = None
    failed: list = field(default_factory=list)


def grid_search(family, grid, X, y, X_val, y_val, n_classes=None, seed=0, class_weights=None,
                threads=None):
    """Train every configuration on the training split and rank by validation macro-F1.

    Configurations run in parallel; the table keeps grid order.  Ties go to
    the earliest configuration.  A configuration that raises is recorded with
    its error and excluded from ranking.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    if len(y_val) == 0:
        raise ValueError("empty validation set")
    K = int(n_classes if n_classes is not None else max(np.max(y), np.max(y_val)) + 1)

    def run(item):
        i, cfg = item
        try:
            params = make_params(family, cfg, seed, class_weights)
            model = fit_family(family, params, X, y, X_val, y_val, K, threads=1)
            f1 = score_predictions(y_val, model.predict(X_val), K).macro_f1
            return GridRow(i, dict(cfg), f1, best_round=getattr(model, "best_round", -1))
        except Exception as e:  # recorded, search continues
            return GridRow(i, dict(cfg), math.nan, error=f"{type(e).__name__}: {e}")

    rows = pmap(run, list(enumerate(grid)), threads)
    ok = [r for r in rows if not r.error]
    order = sorted(ok, key=lambda r: (-r.val_macro_f1, r.index))
    for rank, r in enumerate(order, 1):
        r.rank = rank
    return GridSearchResult(family, rows, order[0] if order else None, [r for r in rows if r.error])


def refit_final(family, result, X, y, X_val, y_val, n_classes, seed=0, class_weights=None, threads=None):
    """Refit the best configuration on train + validation.

    Boosting has no held-out data left at this point, so it grows exactly the
    number of rounds early stopping picked during the search.
    """
    if result.best is None:
        raise ValueError("no configuration trained successfully")
    cfg = dict(result.best.config)
    if family == "gbm":
        cfg["n_rounds"] = max(result.best.best_round, 0)
    params = make_params(family, cfg, seed, class_weights)
    Xa = np.concatenate([X, X_val])
    ya = np.concatenate([y, y_val])
    return fit_family(family, params, Xa, ya, n_classes=n_classes, threads=threads)


def grid_csv_rows(result):
    keys = []
    for r in result.rows:
        for k in r.config:
            if k not in keys:
                keys.append(k)
    header = keys + ["val_macro_f1", "rank"] + (["best_round"] if result.family == "gbm" else []) + ["error"]
    out = [header]
    for r in result.rows:
        row = [r.config.get(k, "") for k in keys]
        row += ["" if r.error else f"{r.val_macro_f1:.6f}", r.rank if not r.error else ""]
        if result.family == "gbm":
            row.append(r.best_round)
        row.append(r.error)
        out.append(row)
    return out
