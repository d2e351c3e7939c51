"""Precursor analysis of construction incident reports.

Binary work attributes are extracted from narratives with a rule/dictionary
lexicon, then tree ensembles, boosting, a linear SVM and a stacked
meta-model predict incident outcomes.
"""
__version__ = "0.1.0"

from .dataset import UNIVERSE, LabeledCase, OutcomeSchema, load_schemas, split_dataset  # noqa: F401
from .extract import extract_attributes, load_lexicon, tokenize  # noqa: F401
