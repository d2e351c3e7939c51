"""Synthetic corpora with a planted attribute -> outcome conditional and its Bayes oracle.

Attributes are independent Bernoulli draws.  The label distribution is

    p(y = k | x)  proportional to  base_k * prod(boost_rk for every rule r that fires)

where a rule fires when all of its attributes are present.  Because only
rule attributes enter the conditional, marginals and the oracle's expected
scores are computed exactly by enumerating those attributes.
"""
import itertools
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import pmap
from .dataset import UNIVERSE, LabeledCase, OutcomeSchema, load_schemas
from .extract import load_lexicon
from .metrics import ClassScores, confusion_matrix, precision_recall_f1, f1_from


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SignalRule:
    attributes: tuple
    boosts: tuple  # one multiplier per category

    def to_json(self):
        return {"attributes": list(self.attributes), "boosts": list(self.boosts)}


@dataclass(frozen=True)
class GeneratorSpec:
    n_cases: int
    schema: OutcomeSchema
    base_rates: tuple
    signal: tuple = ()
    attribute_density: float = 4.0
    attribute_rates: dict = field(default_factory=dict)  # explicit per-attribute rates
    narrative_templates: Optional[dict] = None  # None: use lexicon terms
    render_narratives: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "base_rates", tuple(float(b) for b in self.base_rates))
        object.__setattr__(self, "signal", tuple(
            r if isinstance(r, SignalRule) else SignalRule(tuple(r["attributes"]), tuple(r["boosts"]))
            for r in self.signal))
        K = self.schema.K
        if len(self.base_rates) != K or min(self.base_rates) < 0:
            raise ConfigurationError(f"base_rates must hold {K} nonnegative values")
        if abs(sum(self.base_rates) - 1.0) > 1e-9:
            raise ConfigurationError("base_rates must sum to 1")
        if self.n_cases < 0:
            raise ConfigurationError("n_cases must be >= 0")
        for r in self.signal:
            if not r.attributes or len(r.boosts) != K or min(r.boosts) < 0:
                raise ConfigurationError("each rule needs attributes and K nonnegative boosts")
            for a in r.attributes:
                if a not in UNIVERSE:
                    raise ConfigurationError(f"unknown attribute {a!r}")
        for a, q in self.attribute_rates.items():
            if a not in UNIVERSE:
                raise ConfigurationError(f"unknown attribute {a!r}")
            if not 0 <= q <= 1:
                raise ConfigurationError(f"rate of {a!r} must lie in [0, 1]")
        if not 0 <= self.attribute_density < len(UNIVERSE):
            raise ConfigurationError("attribute_density must lie in [0, 80)")
        rates = self.rates()
        if rates.max() > 1 or rates.min() < 0:
            raise ConfigurationError("density cannot be spread over the free attributes")

    @property
    def K(self):
        return self.schema.K

    def rates(self):
        """Per-attribute presence probabilities.

        Explicit rates are kept; the rest of ``attribute_density`` (expected
        bits per case) is spread evenly over the remaining attributes.
        """
        p = len(UNIVERSE)
        rates = np.zeros(p)
        fixed = np.zeros(p, dtype=bool)
        for a, q in self.attribute_rates.items():
            rates[UNIVERSE.index[a]] = q
            fixed[UNIVERSE.index[a]] = True
        free = (~fixed).sum()
        rest = self.attribute_density - rates[fixed].sum()
        if free:
            rates[~fixed] = max(rest, 0.0) / free
        return rates

    def signal_attributes(self):
        seen = []
        for r in self.signal:
            for a in r.attributes:
                if a not in seen:
                    seen.append(a)
        return seen

    def to_json(self):
        return {
            "n_cases": self.n_cases,
            "schema": self.schema.to_json(),
            "base_rates": list(self.base_rates),
            "signal": [r.to_json() for r in self.signal],
            "attribute_density": self.attribute_density,
            "attribute_rates": dict(self.attribute_rates),
            "narrative_templates": self.narrative_templates,
            "render_narratives": self.render_narratives,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        s = obj.pop("schema")
        if isinstance(s, str):
            schema = load_schemas()[s]
        else:
            schema = OutcomeSchema(s["name"], s["categories"])
        return cls(schema=schema, **obj)


def load_spec(path):
    with open(path) as fh:
        return GeneratorSpec.from_json(json.load(fh))


# --------------------------------------------------------------------------
# conditional

def _rule_masks(spec):
    return [np.array([UNIVERSE.index[a] for a in r.attributes]) for r in spec.signal]


def conditional(spec, X):
    """True ``p(y | x)`` for every row of ``X``."""
    X = np.atleast_2d(np.asarray(X))
    logits = np.tile(np.asarray(spec.base_rates, dtype=np.float64), (X.shape[0], 1))
    for rule, cols in zip(spec.signal, _rule_masks(spec)):
        fired = X[:, cols].all(axis=1)
        logits[fired] *= np.asarray(rule.boosts)
    tot = logits.sum(axis=1, keepdims=True)
    base = np.asarray(spec.base_rates)[None, :]
    return np.where(tot > 0, logits / np.where(tot > 0, tot, 1.0), base)


def _enumerate_states(spec):
    names = spec.signal_attributes()
    rates = spec.rates()
    idx = [UNIVERSE.index[a] for a in names]
    if len(idx) > 20:
        raise ConfigurationError("too many signal attributes to enumerate")
    states = np.array(list(itertools.product((0, 1), repeat=len(idx))), dtype=np.uint8).reshape(-1, len(idx))
    q = rates[idx]
    prob = np.prod(np.where(states == 1, q, 1 - q), axis=1)
    X = np.zeros((len(states), len(UNIVERSE)), dtype=np.uint8)
    X[:, idx] = states
    return X, prob


def analytic_marginals(spec):
    """Exact label marginals ``p(y)`` under the generating distribution."""
    X, prob = _enumerate_states(spec)
    return prob @ conditional(spec, X)


def bayes_predict(spec, X):
    return np.argmax(conditional(spec, X), axis=1)


@dataclass
class OracleReport:
    bayes_accuracy: float
    bayes_macro_f1: float
    scores: ClassScores


def expected_oracle(spec):
    """Population accuracy and macro-F1 of the Bayes classifier, in closed form."""
    X, prob = _enumerate_states(spec)
    P = conditional(spec, X)
    pred = np.argmax(P, axis=1)
    K = spec.K
    C = np.zeros((K, K))
    for j in range(K):
        C[:, j] = (prob[:, None] * P)[pred == j].sum(axis=0)
    d = np.diag(C)
    colsum, rowsum = C.sum(axis=0), C.sum(axis=1)
    prec = np.divide(d, colsum, out=np.zeros(K), where=colsum > 0)
    rec = np.divide(d, rowsum, out=np.zeros(K), where=rowsum > 0)
    s = ClassScores(prec, rec, f1_from(prec, rec))
    return OracleReport(float(d.sum()), s.macro_f1, s)


def bayes_oracle(spec, cases):
    """Score the true-conditional argmax on a sample of cases."""
    X = np.array([c.attributes for c in cases], dtype=np.uint8).reshape(len(cases), -1)
    y = np.array([spec.schema.index(c.label(spec.schema.name)) for c in cases], dtype=np.int64)
    C = confusion_matrix(y, bayes_predict(spec, X), spec.K)
    s = precision_recall_f1(C)
    acc = float(np.trace(C) / max(C.sum(), 1))
    return OracleReport(acc, s.macro_f1, s)


# --------------------------------------------------------------------------
# generation

def lexicon_templates(lexicon=None):
    """Phrase pool per attribute built from its lexicon terms and phrases."""
    lexicon = lexicon or load_lexicon()
    out = {}
    for name, entry in lexicon.entries.items():
        pool = list(entry.terms) + [" ".join(p) for p in entry.phrases]
        if pool:
            out[name] = pool
    return out


def _render(rng, names, templates):
    if not names:
        return "Nothing of note was recorded."
    parts = [templates[a][int(rng.integers(len(templates[a])))] for a in names]
    return "Crew reported " + ", ".join(parts) + "."


def generate_corpus(spec, threads=None, chunk=1000):
    """Draw ``spec.n_cases`` labeled cases; case ``i`` uses the stream (seed, i)."""
    rates = spec.rates()
    templates = None
    if spec.render_narratives:
        templates = spec.narrative_templates if spec.narrative_templates is not None else lexicon_templates()
        for j in np.flatnonzero(rates > 0):
            name = UNIVERSE.names[j]
            if not templates.get(name):
                raise ConfigurationError(f"no narrative template for attribute {name!r}")
    cats = spec.schema.categories
    outcome = spec.schema.name

    def block(start):
        out = []
        for i in range(start, min(start + chunk, spec.n_cases)):
            rng = np.random.default_rng([spec.seed, i])
            bits = (rng.random(len(rates)) < rates).astype(np.uint8)
            p = conditional(spec, bits[None, :])[0]
            k = min(int(np.searchsorted(np.cumsum(p), rng.random() * p.sum(), side="right")), spec.K - 1)
            text = _render(rng, UNIVERSE.names_of(bits), templates) if templates is not None else ""
            out.append(LabeledCase(f"s{spec.seed}-{i:06d}", text, bits, {outcome: (cats[k],)}))
        return out

    blocks = pmap(block, range(0, spec.n_cases, chunk), threads)
    return [c for b in blocks for c in b]


# --------------------------------------------------------------------------
# shipped scenarios

DOMINANT_ATTRIBUTE = "object_on_the_floor"
CONSTANT_ATTRIBUTE = "wind"


def default_spec(n_cases=5000, seed=0):
    """Desk-scale benchmark: 6 categories, 8 rules, about 4 attributes per case.

    Category 0 is the background class.  Each other category has a driver
    attribute that makes it likely; ``object_on_the_floor`` is the most
    frequent driver.  Two modifier rules sharpen categories 1 and 4 and a
    pair rule favours category 2.  ``wind`` never occurs.
    """
    schema = load_schemas()["incident_type"]
    drivers = {1: DOMINANT_ATTRIBUTE, 2: "working_at_height", 3: "ladder",
               4: "hammer", 5: "crane"}
    rates = {DOMINANT_ATTRIBUTE: 0.20, "working_at_height": 0.12, "ladder": 0.12,
             "hammer": 0.12, "crane": 0.12, CONSTANT_ATTRIBUTE: 0.0,
             "slippery_surface": 0.10, "sharp_edge": 0.10}
    rules = []
    for k, a in drivers.items():
        b = [1.0] * 6
        b[0] = 0.02
        b[k] = 300.0
        rules.append({"attributes": [a], "boosts": b})
    rules.append({"attributes": ["slippery_surface"], "boosts": [0.5, 4.0, 1, 1, 1, 1]})
    rules.append({"attributes": ["sharp_edge"], "boosts": [0.5, 1, 1, 1, 4.0, 1]})
    rules.append({"attributes": ["working_at_height", "ladder"], "boosts": [1, 1, 6.0, 0.5, 1, 1]})
    base = [0.90, 0.02, 0.02, 0.02, 0.02, 0.02]
    return GeneratorSpec(n_cases, schema, base, rules, 4.0, rates, seed=seed)


def complementary_spec(n_cases=4000, seed=0):
    """Four categories; A attributes drive 0 and 1, B attributes drive 2 and 3.

    Returns ``(spec, a_columns, b_columns)``.  Training one base model on the
    A columns only and the other on the B columns only makes them experts on
    disjoint halves of the label set.
    """
    schema = load_schemas()["injury_type"]
    a_attrs = ["object_on_the_floor", "slippery_surface", "hammer", "sharp_edge"]
    b_attrs = ["working_at_height", "ladder", "crane", "heavy_material_tool"]
    rules = []
    for j, a in enumerate(a_attrs):
        b = [1.0] * 4
        b[j // 2] = 12.0
        rules.append({"attributes": [a], "boosts": b})
    for j, a in enumerate(b_attrs):
        b = [1.0] * 4
        b[2 + j // 2] = 12.0
        rules.append({"attributes": [a], "boosts": b})
    rates = {a: 0.18 for a in a_attrs + b_attrs}
    spec = GeneratorSpec(n_cases, schema, [0.25] * 4, rules, 3.0, rates, seed=seed)
    a_cols = np.array([UNIVERSE.index[a] for a in a_attrs])
    b_cols = np.array([UNIVERSE.index[a] for a in b_attrs])
    return spec, a_cols, b_cols
