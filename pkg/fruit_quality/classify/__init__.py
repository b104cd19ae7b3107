"""
Fruit quality classifier training, searches and evaluation.
"""

from .evaluation import DECISION_THRESHOLD, Evaluation, evaluate, predict_labels, require_all_real
from .search import (
    AUGMENT_TABLE_FILE,
    DESK_COUNTS,
    DESK_WIDTHS,
    WIDTH_TABLE_FILE,
    AugmentRow,
    AugmentTable,
    WidthRow,
    WidthSearchTable,
    augment_sweep,
    augmented_training_set,
    synthetic_stream,
    width_search,
)
from .training import ClassifierConfig, EpochMetrics, TrainRunRecord, fit_epoch, train_classifier

__all__ = [
    "AUGMENT_TABLE_FILE",
    "DECISION_THRESHOLD",
    "DESK_COUNTS",
    "DESK_WIDTHS",
    "WIDTH_TABLE_FILE",
    "AugmentRow",
    "AugmentTable",
    "ClassifierConfig",
    "EpochMetrics",
    "Evaluation",
    "TrainRunRecord",
    "WidthRow",
    "WidthSearchTable",
    "augment_sweep",
    "augmented_training_set",
    "evaluate",
    "fit_epoch",
    "predict_labels",
    "require_all_real",
    "synthetic_stream",
    "train_classifier",
    "width_search",
]
