"""Attribute universe, outcome schemas, labeled cases and the split/weighting steps."""
import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional, Mapping, Sequence

import numpy as np

# Canonical order; recorded (as a fingerprint) in every serialized model.
ATTRIBUTE_NAMES = (
    "adverse_low_temps", "bolt", "cable", "cable_tray", "chipping", "cleaning",
    "concrete", "concrete_liquid", "conduit", "confined_work_space",
    "congested_work_space", "crane", "door", "drill", "dunnage", "electricity",
    "exiting", "fatigued_dizzy", "forklift", "formwork",
    "grinding", "object_at_height", "guardrail_handrail", "hammer",
    "hand_size_pieces", "hazardous_substance", "heat_source",
    "heavy_material_tool", "heavy_vehicle", "hose", "imp_body_position",
    "imp_procedure_inattention", "imp_security_of_materials",
    "imp_security_of_tools", "unpowered_tool", "job_trailer", "ladder",
    "lifting_pulling_manipulating", "light_vehicle", "lumber",
    "machinery", "manlift", "mud", "nail", "improper_ppe", "grout",
    "object_on_the_floor", "piping", "pontoon", "poor_housekeeping", "stairs",
    "powered_tool", "repetitive_motion", "rebar", "scaffold", "screw",
    "sharp_edge", "slag", "slippery_surface", "small_particle",
    "spark", "splinter_sliver", "steel_steel_sections", "poor_visibility",
    "spool", "stripping", "stud", "tank", "uneven_surface", "insect", "wind",
    "wire", "valve", "welding", "unpowered_transporter",
    "unstable_support_surface", "working_below_elev_wksp_mat", "wrench",
    "working_overhead", "working_at_height",
)

OUTCOMES = ("incident_type", "injury_type", "bodypart", "severity")
SINGLE_LABEL_OUTCOMES = frozenset({"incident_type", "severity"})


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class AttributeUniverse:
    """Fixed ordered list of attribute names with a name -> position index."""

    def __init__(self, names: Sequence[str], size: Optional[int] = 80):
        names = tuple(names)
        if size is not None and len(names) != size:
            raise DataError(f"expected {size} attribute names, got {len(names)}")
        if len(set(names)) != len(names):
            dup = [n for n, c in Counter(names).items() if c > 1]
            raise DataError(f"duplicate attribute names: {dup}")
        self.names = names
        self.index = {n: i for i, n in enumerate(names)}

    def __len__(self):
        return len(self.names)

    def __iter__(self):
        return iter(self.names)

    def __contains__(self, name):
        return name in self.index

    def __eq__(self, other):
        return isinstance(other, AttributeUniverse) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    @property
    def fingerprint(self):
        return hashlib.sha256("\n".join(self.names).encode()).hexdigest()[:16]

    def vector(self, names=()):
        v = np.zeros(len(self.names), dtype=np.uint8)
        for n in names:
            try:
                v[self.index[n]] = 1
            except KeyError:
                raise DataError(f"unknown attribute {n!r}") from None
        return v

    def names_of(self, bits):
        return [self.names[i] for i in np.flatnonzero(np.asarray(bits))]


UNIVERSE = AttributeUniverse(ATTRIBUTE_NAMES)
assert len(UNIVERSE) == 80


@dataclass(frozen=True)
class OutcomeSchema:
    name: str
    categories: tuple

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if len(self.categories) < 2:
            raise DataError(f"outcome {self.name!r} needs at least 2 categories")
        if len(set(self.categories)) != len(self.categories):
            raise DataError(f"outcome {self.name!r} has duplicate categories")

    @property
    def K(self):
        return len(self.categories)

    def index(self, category):
        try:
            return self.categories.index(category)
        except ValueError:
            raise DataError(f"{category!r} is not a category of {self.name!r}") from None

    def to_json(self):
        return {"name": self.name, "categories": list(self.categories)}


def load_schemas(path=None):
    """Read outcome schemas; defaults to the four shipped outcome schemas."""
    if path is None:
        text = resources.files("precursor.data").joinpath("schemas.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    raw = json.loads(text)
    if isinstance(raw, dict):
        raw = [raw]
    return {s["name"]: OutcomeSchema(s["name"], s["categories"]) for s in raw}


@dataclass(frozen=True, eq=False)
class LabeledCase:
    id: str
    narrative: str = ""
    attributes: np.ndarray = field(default_factory=lambda: np.zeros(len(UNIVERSE), np.uint8))
    labels: Mapping[str, tuple] = field(default_factory=dict)

    def __post_init__(self):
        bits = np.array(self.attributes, dtype=np.uint8)
        if bits.ndim != 1 or np.any(bits > 1):
            raise DataError(f"case {self.id}: attributes must be a 0/1 vector")
        bits.setflags(write=False)
        object.__setattr__(self, "attributes", bits)
        labels = {k: tuple(v) for k, v in self.labels.items()}
        for k, v in labels.items():
            if not v:
                raise DataError(f"case {self.id}: empty label set for {k!r}")
            if k in SINGLE_LABEL_OUTCOMES and len(v) != 1:
                raise DataError(f"case {self.id}: {k!r} takes exactly one label")
        object.__setattr__(self, "labels", labels)

    def label(self, outcome):
        """The single label for ``outcome`` (raises if multi-labelled)."""
        cats = self.labels[outcome]
        if len(cats) != 1:
            raise DataError(f"case {self.id} has {len(cats)} labels for {outcome!r}; expand first")
        return cats[0]

    def with_attributes(self, bits):
        return LabeledCase(self.id, self.narrative, bits, self.labels)


def validate_labels(cases, schemas):
    for c in cases:
        for outcome, cats in c.labels.items():
            schema = schemas.get(outcome)
            if schema is None:
                continue
            for cat in cats:
                if cat not in schema.categories:
                    raise DataError(f"case {c.id}: {cat!r} is not a category of {outcome!r}")


# --------------------------------------------------------------------------
# case files (JSON lines)

def case_from_json(obj, universe=UNIVERSE):
    if "id" not in obj:
        raise DataError("case record without id")
    attrs = obj.get("attributes", [])
    if attrs and all(isinstance(a, str) for a in attrs):
        bits = universe.vector(attrs)
    elif attrs:
        bits = np.asarray(attrs, dtype=np.int64)
        if bits.shape != (len(universe),) or not np.isin(bits, (0, 1)).all():
            raise DataError(f"case {obj['id']}: attribute array must be {len(universe)} bits")
        bits = bits.astype(np.uint8)
    else:
        bits = np.zeros(len(universe), dtype=np.uint8)
    labels = {}
    for k, v in (obj.get("labels") or {}).items():
        labels[k] = (v,) if isinstance(v, str) else tuple(v)
    return LabeledCase(str(obj["id"]), obj.get("narrative", "") or "", bits, labels)


def case_to_json(case, universe=UNIVERSE):
    return {
        "id": case.id,
        "narrative": case.narrative,
        "attributes": universe.names_of(case.attributes),
        "labels": {k: list(v) for k, v in case.labels.items()},
    }


def dumps_case(case, universe=UNIVERSE):
    return json.dumps(case_to_json(case, universe), ensure_ascii=False)


def read_cases(path, universe=UNIVERSE):
    cases = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                cases.append(case_from_json(json.loads(line), universe))
            except (json.JSONDecodeError, DataError) as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    return cases


def write_cases(path, cases, universe=UNIVERSE):
    with open(path, "w", encoding="utf-8") as fh:
        for c in cases:
            fh.write(dumps_case(c, universe) + "\n")


# --------------------------------------------------------------------------
# splitting, expansion, weights

@dataclass(frozen=True)
class SplitSpec:
    test_fraction: float = 0.10
    val_fraction_of_train: float = 0.10
    seed: int = 0

    def __post_init__(self):
        for name in ("test_fraction", "val_fraction_of_train"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split_sizes(n, spec):
    n_test = _round_half_up(spec.test_fraction * n)
    pool = n - n_test
    n_val = _round_half_up(spec.val_fraction_of_train * pool)
    return pool - n_val, n_val, n_test


def split_dataset(cases, spec=SplitSpec(), stratify_by=None):
    """Uniform random train/val/test partition.

    Test takes ``round(test_fraction * n)`` cases; validation takes
    ``round(val_fraction_of_train * remaining)``.  Partitions keep the input
    order.  ``stratify_by`` names an outcome to stratify on (first label).
    """
    n = len(cases)
    n_train, n_val, n_test = split_sizes(n, spec)
    if n < 10 or min(n_train, n_val, n_test) < 1:
        raise DataError(f"cannot populate train/val/test from {n} cases")
    rng = np.random.default_rng(spec.seed)
    if stratify_by is None:
        perm = rng.permutation(n)
        test_idx = perm[:n_test]
        val_idx = perm[n_test:n_test + n_val]
    else:
        test_idx, val_idx = _stratified(cases, stratify_by, spec, rng)
    role = np.zeros(n, dtype=np.int8)
    role[test_idx] = 2
    role[val_idx] = 1
    train = [c for c, r in zip(cases, role) if r == 0]
    val = [c for c, r in zip(cases, role) if r == 1]
    test = [c for c, r in zip(cases, role) if r == 2]
    return train, val, test


def _stratified(cases, outcome, spec, rng):
    groups = {}
    for i, c in enumerate(cases):
        groups.setdefault(c.labels[outcome][0], []).append(i)
    test_idx, val_idx = [], []
    for key in sorted(groups):
        idx = np.asarray(groups[key])[rng.permutation(len(groups[key]))]
        _, nv, nt = split_sizes(len(idx), spec)
        test_idx.extend(idx[:nt])
        val_idx.extend(idx[nt:nt + nv])
    return np.asarray(test_idx, dtype=np.int64), np.asarray(val_idx, dtype=np.int64)


def expand_multilabel(partition, outcome):
    """One single-label case per (case, category) pair for ``outcome``.

    Returns ``(expanded, dropped)`` where ``dropped`` counts cases without any
    label for the outcome.  Must be applied to already-split partitions.
    """
    out = []
    dropped = 0
    for c in partition:
        cats = c.labels.get(outcome)
        if not cats:
            dropped += 1
            continue
        if len(cats) == 1:
            out.append(c)
            continue
        for cat in cats:
            labels = dict(c.labels)
            labels[outcome] = (cat,)
            out.append(LabeledCase(f"{c.id}#{cat}", c.narrative, c.attributes, labels))
    return out, dropped


@dataclass(frozen=True)
class ClassWeights:
    weights: Mapping[str, float]

    def as_array(self, schema):
        return np.array([self.weights[c] for c in schema.categories], dtype=np.float64)

    def rounded(self, digits=1):
        return {k: round(v, digits) for k, v in self.weights.items()}


def class_weights_from_counts(counts):
    """Inverse-frequency weights: ``max_count / count_k``."""
    for cat, n in counts.items():
        if n <= 0:
            raise DataError(f"category {cat!r} has no training examples")
    top = max(counts.values())
    return ClassWeights({cat: top / n for cat, n in counts.items()})


def class_weights(train, schema):
    counts = Counter(c.label(schema.name) for c in train)
    return class_weights_from_counts({cat: counts.get(cat, 0) for cat in schema.categories})


def unit_weights(schema):
    return ClassWeights({c: 1.0 for c in schema.categories})


def design_matrix(cases, schema=None):
    """Stack attribute vectors into ``X`` and, given a schema, label indices ``y``."""
    X = np.array([c.attributes for c in cases], dtype=np.uint8).reshape(len(cases), -1)
    if schema is None:
        return X
    y = np.array([schema.index(c.label(schema.name)) for c in cases], dtype=np.int64)
    return X, y
