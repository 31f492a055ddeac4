"""Online l1-multicalibration through online linear-product optimisation."""
from .core import (HypothesisClass, LinearHypothesis, PredictionGrid, TableHypothesis, Transcript,
                   Universe, linear_class, make_rng, random_table_class, table_class)
from .mcerror import k_error, k_error_all, k_error_class
from .reduction import ExperimentConfig, run_experiment

__all__ = [
    "ExperimentConfig", "HypothesisClass", "LinearHypothesis", "PredictionGrid",
    "TableHypothesis", "Transcript", "Universe", "k_error", "k_error_all", "k_error_class",
    "linear_class", "make_rng", "random_table_class", "run_experiment", "table_class",
]
