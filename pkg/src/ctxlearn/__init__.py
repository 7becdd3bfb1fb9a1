"""ctxlearn: online classification under concept drift with automatic context discovery.

A streaming classifier watches its own windowed accuracy; a drop triggers
matching of the current sample against a knowledge base of per-context
autoencoders, and the discovered context ID is appended to the feature
vector before classification.
"""

from .core import (
    LabeledSample,
    Sample,
    Stream,
    StreamSpec,
    concat_context,
    concat_label,
    make_rng,
)
from .autoencoder import Autoencoder, TrainConfig, init_autoencoder, reconstruct, reconstruction_error, train
from .tree import TreeClassifier, fit_tree
from .context import ContextKnowledgeBase, ErrorStats, InsufficientStatsError
from .learners import LEARNER_NAMES, LearnerConfig, StepResult, make_learner, run_prequential
from .metrics import EvaluationTrace, ewma, mean_accuracy, summarize

__all__ = [
    "Autoencoder",
    "ContextKnowledgeBase",
    "ErrorStats",
    "EvaluationTrace",
    "InsufficientStatsError",
    "LEARNER_NAMES",
    "LabeledSample",
    "LearnerConfig",
    "Sample",
    "StepResult",
    "Stream",
    "StreamSpec",
    "TrainConfig",
    "TreeClassifier",
    "concat_context",
    "concat_label",
    "ewma",
    "fit_tree",
    "init_autoencoder",
    "make_learner",
    "make_rng",
    "mean_accuracy",
    "reconstruct",
    "reconstruction_error",
    "run_prequential",
    "summarize",
    "train",
]

__version__ = "0.1.0"
