import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from precursor.dataset import (ATTRIBUTE_NAMES, UNIVERSE, AttributeUniverse, DataError, LabeledCase,
                               SplitSpec, case_from_json, case_to_json, class_weights,
                               class_weights_from_counts, design_matrix, expand_multilabel,
                               load_schemas, read_cases, split_dataset, split_sizes, write_cases)

INCIDENT_TYPE_TRAIN_COUNTS = {"eq./tools": 26167, "access": 9300, "slips/trips/falls": 18432,
                "dropped": 7619, "PPE": 8078, "rules": 12878}


def make_cases(n, labels=None, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        lab = {"incident_type": (labels[i] if labels else "rules",)}
        out.append(LabeledCase(f"c{i}", "", (rng.random(80) < 0.1).astype(np.uint8), lab))
    return out


def test_universe_has_80_unique_names():
    assert len(ATTRIBUTE_NAMES) == 80
    assert len(set(ATTRIBUTE_NAMES)) == 80
    assert UNIVERSE.index["cable"] == ATTRIBUTE_NAMES.index("cable")


def test_fingerprint_depends_on_order():
    swapped = list(ATTRIBUTE_NAMES)
    swapped[0], swapped[1] = swapped[1], swapped[0]
    assert AttributeUniverse(swapped).fingerprint != UNIVERSE.fingerprint
    assert AttributeUniverse(list(ATTRIBUTE_NAMES)).fingerprint == UNIVERSE.fingerprint


def test_universe_rejects_wrong_size():
    with pytest.raises(DataError):
        AttributeUniverse(ATTRIBUTE_NAMES[:79])


def test_schema_category_counts():
    s = load_schemas()
    assert {k: v.K for k, v in s.items()} == {"incident_type": 6, "injury_type": 4,
                                              "bodypart": 6, "severity": 2}


def test_single_label_outcomes_enforced():
    with pytest.raises(DataError):
        LabeledCase("x", labels={"severity": ("1st aid", "med./restr.")})
    LabeledCase("x", labels={"bodypart": ("head", "upper extr.")})


def test_case_json_roundtrip_uses_attribute_names():
    c = LabeledCase("a1", "text", UNIVERSE.vector(["cable", "lumber"]), {"bodypart": ("head",)})
    obj = case_to_json(c)
    assert obj["attributes"] == ["cable", "lumber"]
    back = case_from_json(json.loads(json.dumps(obj)))
    assert np.array_equal(back.attributes, c.attributes) and back.labels == c.labels


def test_case_json_accepts_bit_array():
    bits = [0] * 80
    bits[3] = 1
    c = case_from_json({"id": "b", "attributes": bits})
    assert UNIVERSE.names_of(c.attributes) == [ATTRIBUTE_NAMES[3]]


def test_empty_narrative_with_attributes_is_legal(tmp_path):
    c = LabeledCase("e", "", UNIVERSE.vector(["crane"]), {"incident_type": ("rules",)})
    write_cases(tmp_path / "c.jsonl", [c])
    (back,) = read_cases(tmp_path / "c.jsonl")
    assert back.narrative == "" and UNIVERSE.names_of(back.attributes) == ["crane"]


def test_split_sizes_default_100():
    assert split_sizes(100, SplitSpec()) == (81, 9, 10)
    train, val, test = split_dataset(make_cases(100), SplitSpec(seed=4))
    assert (len(train), len(val), len(test)) == (81, 9, 10)


def test_split_is_deterministic():
    cases = make_cases(57)
    a = split_dataset(cases, SplitSpec(seed=11))
    b = split_dataset(cases, SplitSpec(seed=11))
    assert [[c.id for c in p] for p in a] == [[c.id for c in p] for p in b]


def test_split_too_small():
    with pytest.raises(DataError):
        split_dataset(make_cases(9), SplitSpec())


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(test_fraction=0.0)
    with pytest.raises(ValueError):
        SplitSpec(val_fraction_of_train=1.0)


@given(n=st.integers(10, 300), seed=st.integers(0, 2**63 - 1),
       tf=st.floats(0.05, 0.5), vf=st.floats(0.05, 0.5))
def test_split_partition_disjoint_and_covering(n, seed, tf, vf):
    cases = make_cases(n)
    spec = SplitSpec(tf, vf, seed)
    try:
        parts = split_dataset(cases, spec)
    except DataError:
        assert min(split_sizes(n, spec)) < 1
        return
    ids = [c.id for p in parts for c in p]
    assert len(ids) == len(set(ids)) == n


def test_stratified_split_keeps_proportions():
    labels = ["eq./tools"] * 600 + ["rules"] * 300 + ["PPE"] * 100
    parts = split_dataset(make_cases(1000, labels), SplitSpec(seed=2), stratify_by="incident_type")
    test = parts[2]
    frac = sum(c.labels["incident_type"][0] == "PPE" for c in test) / len(test)
    assert frac == pytest.approx(0.1, abs=0.01)


def test_expand_multilabel_example():
    c = LabeledCase("k", "", labels={"bodypart": ("head", "upper extr.")})
    out, dropped = expand_multilabel([c], "bodypart")
    assert dropped == 0
    assert [(x.id, x.labels["bodypart"]) for x in out] == [("k#head", ("head",)),
                                                          ("k#upper extr.", ("upper extr.",))]


def test_expand_multilabel_counts_and_drops():
    cases = []
    for i in range(300):
        labs = ("hand", "finger") if i < 20 else ("eye",)
        cases.append(LabeledCase(f"c{i}", labels={"bodypart": labs}))
    cases.append(LabeledCase("nolabel", labels={"severity": ("1st aid",)}))
    out, dropped = expand_multilabel(cases, "bodypart")
    assert len(out) == 320 and dropped == 1
    single = [c for c in cases if c.id == "c25"][0]
    assert [c for c in out if c.id == "c25"][0] is single


def test_expansion_after_split_shares_no_source_ids():
    rng = np.random.default_rng(0)
    cats = load_schemas()["bodypart"].categories
    cases = [LabeledCase(f"c{i}", labels={"bodypart": tuple(rng.choice(cats, size=rng.integers(1, 3), replace=False))})
             for i in range(200)]
    train, _, test = split_dataset(cases, SplitSpec(seed=3))
    src = lambda part: {c.id.split("#")[0] for c in expand_multilabel(part, "bodypart")[0]}  # noqa: E731
    assert not (src(train) & src(test))


def test_incident_type_class_weights():
    w = class_weights_from_counts(INCIDENT_TYPE_TRAIN_COUNTS)
    order = ["eq./tools", "access", "slips/trips/falls", "dropped", "PPE", "rules"]
    assert [w.rounded()[k] for k in order] == [1.0, 2.8, 1.4, 3.4, 3.2, 2.0]
    for k, n in INCIDENT_TYPE_TRAIN_COUNTS.items():
        assert abs(w.weights[k] - 26167 / n) < 1e-12


def test_class_weights_simple_ratios():
    assert class_weights_from_counts({"A": 900, "B": 100}).weights == {"A": 1.0, "B": 9.0}
    assert class_weights_from_counts({"A": 5, "B": 5}).weights == {"A": 1.0, "B": 1.0}


def test_class_weights_missing_category_is_named():
    schema = load_schemas()["severity"]
    cases = [LabeledCase(f"c{i}", labels={"severity": ("1st aid",)}) for i in range(5)]
    with pytest.raises(DataError, match="med./restr."):
        class_weights(cases, schema)


@given(st.dictionaries(st.sampled_from("abcdef"), st.integers(1, 10**6), min_size=1),
       st.integers(1, 1000))
def test_class_weights_scale_invariant(counts, m):
    a = class_weights_from_counts(counts).weights
    b = class_weights_from_counts({k: v * m for k, v in counts.items()}).weights
    for k in counts:
        assert a[k] == pytest.approx(b[k], rel=1e-12)
        assert a[k] >= 1.0
    assert max(a.values()) >= 1.0 and min(a.values()) <= max(a.values())
    assert 1.0 in a.values()


def test_design_matrix_shapes():
    schema = load_schemas()["incident_type"]
    X, y = design_matrix(make_cases(7), schema)
    assert X.shape == (7, 80) and X.dtype == np.uint8
    assert (y == schema.index("rules")).all()
