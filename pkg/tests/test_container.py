import json

import numpy as np
import pytest

from precursor.container import (MAGIC, ContainerError, blob_fingerprint, decode_model, dump_json,
                                 encode_model, read_container)
from precursor.dataset import UNIVERSE, AttributeUniverse, load_schemas
from precursor.forest import ForestParams, fit_forest
from precursor.gbm import GbmParams, fit_gbm
from precursor.stack import train_stack
from precursor.svm import SvmParams, fit_linear_svm

SCHEMA = load_schemas()["injury_type"]


@pytest.fixture(scope="module")
def data():
    rng = np.random.default_rng(0)
    X = (rng.random((200, 80)) < 0.1).astype(np.uint8)
    y = np.where(X[:, 0] == 1, 1, np.where(X[:, 1] == 1, 2, np.where(X[:, 2] == 1, 3, 0)))
    return X[:150], y[:150], X[150:], y[150:]


@pytest.fixture(scope="module")
def models(data):
    X, y, Xv, yv = data
    forest = fit_forest(X, y, ForestParams(ntree=8, mtry=5, seed=2), n_classes=4)
    gbm = fit_gbm(X, y, Xv, yv, GbmParams(max_depth=2, ntrees_cap=15, patience=5, seed=2), n_classes=4)
    svm = fit_linear_svm(X, y, SvmParams(C=0.5, seed=2), n_classes=4)
    return {"forest": forest, "gbm": gbm, "svm": svm}


@pytest.mark.parametrize("family", ["forest", "gbm", "svm"])
def test_round_trip_predictions(family, models, data):
    blob = encode_model(family, models[family], SCHEMA, seed=2)
    model, header = decode_model(blob, family)
    assert header["family"] == family and header["schema_obj"] == SCHEMA
    X = data[2]
    a, b = models[family], model
    if family == "svm":
        assert np.array_equal(a.decision_values(X), b.decision_values(X))
    else:
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
    assert encode_model(family, model, SCHEMA, seed=2) == blob


def test_stack_round_trip(data):
    X, y, Xv, yv = data
    stack, forest, gbm, _ = train_stack(X, y, Xv, yv, ForestParams(ntree=6, seed=1),
                                        GbmParams(max_depth=2, ntrees_cap=10, patience=5), 4)
    fb = encode_model("forest", forest, SCHEMA, 1)
    gb = encode_model("gbm", gbm, SCHEMA, 1)
    stack.base_fingerprints = (blob_fingerprint(fb), blob_fingerprint(gb))
    blob = encode_model("stack", stack, SCHEMA, 1, extra={"forest": fb, "gbm": gb})
    model, _ = decode_model(blob, "stack")
    assert np.array_equal(model.W, stack.W) and set(model.bases) == {"forest", "gbm"}
    assert np.array_equal(model.bases["forest"].predict_proba(Xv), forest.predict_proba(Xv))


def test_bad_magic(models):
    blob = encode_model("svm", models["svm"], SCHEMA, 0)
    with pytest.raises(ContainerError, match="magic"):
        decode_model(b"NOTMODEL" + blob[len(MAGIC):])


def test_permuted_universe_rejected(models):
    blob = encode_model("svm", models["svm"], SCHEMA, 0)
    names = list(UNIVERSE.names)
    names[0], names[1] = names[1], names[0]
    with pytest.raises(ContainerError, match="fingerprint"):
        decode_model(blob, universe=AttributeUniverse(names))


def test_cross_family_rejected(models):
    blob = encode_model("forest", models["forest"], SCHEMA, 0)
    with pytest.raises(ContainerError, match="expected a gbm"):
        decode_model(blob, "gbm")


def test_header_is_sorted_json(models):
    header, arrays = read_container(encode_model("gbm", models["gbm"], SCHEMA, 0))
    assert header["universe_fingerprint"] == UNIVERSE.fingerprint
    assert [m["name"] for m in header["arrays"]] == sorted(arrays)


def test_dump_json_is_lossless(models):
    blob = encode_model("gbm", models["gbm"], SCHEMA, 0)
    view = json.loads(dump_json(blob))
    header, arrays = read_container(blob)
    assert view["header"] == header
    for name, a in arrays.items():
        entry = view["arrays"][name]
        back = np.array(entry["data"], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        assert np.array_equal(back, a) and back.dtype == a.dtype
