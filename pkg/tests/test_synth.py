import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from precursor.dataset import UNIVERSE, design_matrix, dumps_case, load_schemas
from precursor.metrics import score_predictions
from precursor.svm import SvmParams, fit_linear_svm
from precursor.extract import extract_attributes, load_lexicon
from precursor.synth import (CONSTANT_ATTRIBUTE, DOMINANT_ATTRIBUTE, ConfigurationError, GeneratorSpec,
                             analytic_marginals, bayes_oracle, complementary_spec, conditional,
                             default_spec, expected_oracle, generate_corpus, lexicon_templates)

INJURY = load_schemas()["injury_type"]


def _spec(**kw):
    base = dict(n_cases=500, schema=INJURY, base_rates=[0.4, 0.3, 0.2, 0.1])
    base.update(kw)
    return GeneratorSpec(**base)


def test_density_zero():
    spec = _spec(n_cases=3000, attribute_density=0.0, render_narratives=False)
    X, y = design_matrix(generate_corpus(spec), INJURY)
    assert X.sum() == 0
    assert np.allclose(np.bincount(y, minlength=4) / len(y), [0.4, 0.3, 0.2, 0.1], atol=0.03)


def test_deterministic_rule():
    rule = {"attributes": ["ladder"], "boosts": [0.0, 1.0, 0.0, 0.0]}
    spec = _spec(n_cases=2000, signal=[rule], attribute_rates={"ladder": 0.3}, render_narratives=False)
    X, y = design_matrix(generate_corpus(spec), INJURY)
    has = X[:, UNIVERSE.index["ladder"]] == 1
    assert has.any() and (y[has] == 1).all()


def test_marginals_match_analytic():
    spec = dataclasses.replace(default_spec(), n_cases=50000, render_narratives=False)
    _, y = design_matrix(generate_corpus(spec), spec.schema)
    emp = np.bincount(y, minlength=spec.K) / len(y)
    assert np.abs(emp - analytic_marginals(spec)).max() < 0.02


def test_oracle_on_deterministic_spec():
    rules = [{"attributes": ["ladder"], "boosts": [0, 1, 0, 0]},
             {"attributes": ["crane"], "boosts": [0, 0, 1, 0]}]
    spec = _spec(n_cases=1000, base_rates=[1.0, 0.0, 0.0, 0.0], signal=rules,
                 attribute_rates={"ladder": 0.3, "crane": 0.0}, render_narratives=False)
    rep = bayes_oracle(spec, generate_corpus(spec))
    assert rep.bayes_accuracy == 1.0
    assert expected_oracle(spec).bayes_accuracy == pytest.approx(1.0)


def test_priors_only_predicts_majority():
    spec = _spec(n_cases=300, render_narratives=False)
    rep = bayes_oracle(spec, generate_corpus(spec))
    assert rep.scores.recall.tolist() == [1.0, 0.0, 0.0, 0.0]


def test_default_spec_bayes_ceiling():
    spec = default_spec()
    assert len(spec.signal) == 8 and spec.attribute_density == 4.0 and spec.K == 6
    assert expected_oracle(spec).bayes_macro_f1 >= 0.75
    assert spec.rates()[UNIVERSE.index[CONSTANT_ATTRIBUTE]] == 0
    assert spec.rates().sum() == pytest.approx(4.0)


def test_complementary_spec_columns_disjoint():
    spec, a, b = complementary_spec()
    assert not set(a) & set(b)
    assert {r.attributes[0] for r in spec.signal} == {UNIVERSE.names[j] for j in np.concatenate([a, b])}


@settings(max_examples=20)
@given(st.lists(st.floats(0.01, 50), min_size=4, max_size=4), st.integers(0, 2**31 - 1))
def test_conditional_is_distribution(boosts, seed):
    spec = _spec(signal=[{"attributes": ["ladder"], "boosts": boosts}])
    X = (np.random.default_rng(seed).random((20, 80)) < 0.5).astype(np.uint8)
    P = conditional(spec, X)
    assert np.allclose(P.sum(axis=1), 1) and (P >= 0).all()


def test_round_trip_extraction():
    spec = dataclasses.replace(default_spec(), n_cases=400)
    lex = load_lexicon()
    covered = np.array([n in lexicon_templates(lex) for n in UNIVERSE.names])
    for case in generate_corpus(spec):
        got = extract_attributes(case.narrative, lex)
        missing = (np.asarray(case.attributes) == 1) & covered & (got == 0)
        assert not missing.any(), (case.narrative, UNIVERSE.names_of(missing.astype(np.uint8)))


def test_byte_identical_and_thread_independent():
    spec = dataclasses.replace(default_spec(), n_cases=1200, seed=9)
    a = [dumps_case(c) for c in generate_corpus(spec, threads=1, chunk=100)]
    b = [dumps_case(c) for c in generate_corpus(spec, threads=4, chunk=500)]
    assert a == b


def test_missing_template_raises():
    spec = _spec(narrative_templates={"ladder": ["a ladder"]})
    with pytest.raises(ConfigurationError, match="template"):
        generate_corpus(spec)


def test_invalid_priors():
    with pytest.raises(ConfigurationError):
        _spec(base_rates=[0.5, 0.5, 0.5, 0.5])
    with pytest.raises(ConfigurationError):
        _spec(attribute_density=80)


def test_json_round_trip():
    spec = default_spec(n_cases=10, seed=3)
    assert GeneratorSpec.from_json(spec.to_json()) == spec


def test_dominant_driver_is_most_frequent():
    spec = default_spec()
    rates = spec.rates()
    drivers = [r.attributes[0] for r in spec.signal[:5]]
    assert max(drivers, key=lambda a: rates[UNIVERSE.index[a]]) == DOMINANT_ATTRIBUTE


def test_oracle_beats_trained_model_on_large_sample():
    spec = dataclasses.replace(default_spec(), render_narratives=False)
    X, y = design_matrix(generate_corpus(spec), spec.schema)
    fresh = generate_corpus(dataclasses.replace(spec, n_cases=40000, seed=99))
    Xt, yt = design_matrix(fresh, spec.schema)
    pred = fit_linear_svm(X, y, SvmParams(C=0.01), n_classes=spec.K).predict(Xt)
    rep = bayes_oracle(spec, fresh)
    assert rep.bayes_macro_f1 >= score_predictions(yt, pred, spec.K).macro_f1 - 0.02
    assert rep.bayes_accuracy >= np.mean(pred == yt) - 0.02
