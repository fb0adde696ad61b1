"""Weak-supervision annotation platform for hourly clinical time-series."""

__version__ = "0.1.0"

from .annotations import Annotation, Source
from .dataset import (
    AdmissionSeries,
    DataError,
    Dataset,
    ParameterDef,
    ParameterDictionary,
    default_dictionary,
    ingest_dataset,
    load_dictionary,
    save_dictionary,
    write_data,
)
from .dsl import DslError, parse_ruleset, to_dsl
from .engine import (
    EvaluationReport,
    evaluate_hour,
    evaluate_ruleset,
    evaluate_ruleset_naive,
)
from .rules import Relation, Rule, Ruleset, RulesetError, ruleset_from_doc, ruleset_to_doc
from .synth import generate_synthetic, hidden_labels, hidden_ruleset_dsl
