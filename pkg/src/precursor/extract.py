"""Dictionary and rule based attribute extraction from incident narratives.

A lexicon maps each attribute to single-token terms, multi-token phrases and
implication rules.  Matching is exact on lowercased tokens (no stemming, no
negation handling).  Ambiguous words are assigned to a single attribute in the
shipped lexicon; "truck", for instance, maps to light_vehicle only.
"""
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping

import numpy as np

from .dataset import UNIVERSE, DataError

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

# Tokens an implication rule may skip between pattern elements.
STOP_WORDS = frozenset(
    "a an the his her their its my our your some this that these those of".split()
)
MAX_SKIP = 2
WILDCARD = "*"


class LexiconError(DataError):
    pass


class AlignmentError(DataError):
    pass


def tokenize(text):
    """Lowercased word tokens; punctuation is dropped, "2x4" stays whole."""
    if not text:
        return []
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class ImplicationRule:
    pattern: tuple
    implies: str

    def __post_init__(self):
        elems = []
        for e in self.pattern:
            if e == WILDCARD:
                elems.append(WILDCARD)
            else:
                alts = frozenset(t.lower() for t in ([e] if isinstance(e, str) else e))
                if not alts:
                    raise LexiconError("empty alternative set in rule pattern")
                elems.append(alts)
        if not elems:
            raise LexiconError(f"empty pattern for rule implying {self.implies!r}")
        if sum(e == WILDCARD for e in elems) > 1:
            raise LexiconError("a rule pattern may hold at most one wildcard slot")
        if elems[0] == WILDCARD:
            raise LexiconError("a rule pattern cannot start with the wildcard")
        object.__setattr__(self, "pattern", tuple(elems))

    def matches(self, tokens):
        first = self.pattern[0]
        for start, tok in enumerate(tokens):
            if tok in first and self._match_from(tokens, start + 1, 1):
                return True
        return False

    def _match_from(self, tokens, pos, k):
        if k == len(self.pattern):
            return True
        elem = self.pattern[k]
        for skip in range(MAX_SKIP + 1):
            i = pos + skip
            if i >= len(tokens):
                return False
            tok = tokens[i]
            if elem == WILDCARD:
                hit = tok not in STOP_WORDS
            else:
                hit = tok in elem
            if hit and self._match_from(tokens, i + 1, k + 1):
                return True
            if tok not in STOP_WORDS:
                return False
        return False

    def to_json(self):
        return {
            "pattern": [WILDCARD if e == WILDCARD else sorted(e) for e in self.pattern],
            "implies": self.implies,
        }


@dataclass(frozen=True)
class LexiconEntry:
    terms: tuple = ()
    phrases: tuple = ()
    rules: tuple = ()


@dataclass(frozen=True)
class Lexicon:
    entries: Mapping[str, LexiconEntry]
    version: str = "unversioned"
    universe: object = field(default=UNIVERSE, compare=False, repr=False)

    def __post_init__(self):
        for name, entry in self.entries.items():
            if name not in self.universe:
                raise LexiconError(f"lexicon attribute {name!r} is not in the universe")
            if len(set(entry.terms)) != len(entry.terms):
                raise LexiconError(f"duplicate terms for {name!r}")
            for rule in entry.rules:
                if rule.implies not in self.universe:
                    raise LexiconError(f"rule implies unknown attribute {rule.implies!r}")
        # lookup tables; built once, order-independent
        term_index = {}
        phrase_index = {}
        rules = []
        for name in sorted(self.entries):
            entry = self.entries[name]
            pos = self.universe.index[name]
            for t in entry.terms:
                term_index.setdefault(t, set()).add(pos)
            for p in entry.phrases:
                phrase_index.setdefault(p[0], []).append((p, pos))
            for r in entry.rules:
                rules.append((r, self.universe.index[r.implies]))
        object.__setattr__(self, "_terms", term_index)
        object.__setattr__(self, "_phrases", phrase_index)
        object.__setattr__(self, "_rules", rules)

    @classmethod
    def from_json(cls, obj, universe=UNIVERSE):
        entries = {}
        for name, spec in obj.get("attributes", {}).items():
            terms = tuple(t.lower() for t in spec.get("terms", []))
            phrases = tuple(tuple(tok.lower() for tok in p) for p in spec.get("phrases", []))
            if any(not p for p in phrases):
                raise LexiconError(f"empty phrase for {name!r}")
            rules = tuple(ImplicationRule(tuple(r["pattern"]), r["implies"]) for r in spec.get("rules", []))
            entries[name] = LexiconEntry(terms, phrases, rules)
        return cls(entries, str(obj.get("version", "unversioned")), universe)

    def to_json(self):
        return {
            "version": self.version,
            "attributes": {
                name: {
                    "terms": list(e.terms),
                    "phrases": [list(p) for p in e.phrases],
                    "rules": [r.to_json() for r in e.rules],
                }
                for name, e in self.entries.items()
            },
        }

    def extract(self, text):
        return extract_attributes(text, self)


def load_lexicon(path=None, universe=UNIVERSE):
    if path is None:
        text = resources.files("precursor.data").joinpath("starter_lexicon.json").read_text()
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return Lexicon.from_json(json.loads(text), universe)


def extract_attributes(text, lexicon):
    """Binary attribute vector for ``text``: term, phrase and rule hits combined."""
    tokens = tokenize(text)
    bits = np.zeros(len(lexicon.universe), dtype=np.uint8)
    if not tokens:
        return bits
    for i, tok in enumerate(tokens):
        for pos in lexicon._terms.get(tok, ()):
            bits[pos] = 1
        for phrase, pos in lexicon._phrases.get(tok, ()):
            if tuple(tokens[i:i + len(phrase)]) == phrase:
                bits[pos] = 1
    for rule, pos in lexicon._rules:
        if not bits[pos] and rule.matches(tokens):
            bits[pos] = 1
    return bits


# --------------------------------------------------------------------------
# agreement with human coding

@dataclass(frozen=True)
class GoldAnnotation:
    id: str
    attributes: frozenset


def read_gold(path, universe=UNIVERSE):
    gold = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                attrs = frozenset(obj.get("attributes", []))
                unknown = attrs - set(universe.names)
                if unknown:
                    raise DataError(f"gold case {obj['id']}: unknown attributes {sorted(unknown)}")
                gold.append(GoldAnnotation(str(obj["id"]), attrs))
    return gold


@dataclass
class AgreementReport:
    n_cases: int
    overall: float
    per_attribute: dict
    precision: dict
    recall: dict


def score_agreement(predicted, gold, universe=UNIVERSE):
    """Bitwise agreement between extracted vectors and human coding.

    ``predicted`` maps case id to attribute vector (a list of ``(id, vector)``
    pairs is accepted too).  Per-attribute precision/recall are NaN where the
    denominator is zero.
    """
    pred = dict(predicted.items() if hasattr(predicted, "items") else predicted)
    gold_ids = [g.id for g in gold]
    if set(pred) != set(gold_ids) or len(gold_ids) != len(set(gold_ids)):
        missing = sorted(set(gold_ids) - set(pred))
        extra = sorted(set(pred) - set(gold_ids))
        raise AlignmentError(f"case ids do not align (missing={missing[:5]}, extra={extra[:5]})")
    n = len(gold)
    P = np.array([np.asarray(pred[g.id], dtype=np.uint8) for g in gold]).reshape(n, len(universe))
    G = np.array([universe.vector(g.attributes) for g in gold]).reshape(n, len(universe))
    diff = P != G
    overall = 1.0 - diff.sum() / (n * len(universe)) if n else 1.0
    per_attr, prec, rec = {}, {}, {}
    tp = (P & G).sum(axis=0)
    npred = P.sum(axis=0)
    ngold = G.sum(axis=0)
    for j, name in enumerate(universe.names):
        per_attr[name] = 1.0 - diff[:, j].mean() if n else 1.0
        prec[name] = tp[j] / npred[j] if npred[j] else float("nan")
        rec[name] = tp[j] / ngold[j] if ngold[j] else float("nan")
    return AgreementReport(n, float(overall), per_attr, prec, rec)
