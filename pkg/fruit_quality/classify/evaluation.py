"""
Classifier evaluation at the fixed 0.5 threshold.
"""

# Standard library imports
import logging
from dataclasses import dataclass
from typing import Protocol

# Third-party imports
import numpy as np
from sklearn.metrics import accuracy_score, confusion_matrix

# Local imports
from ..data.dataset import HEALTHY, UNHEALTHY, Dataset
from ..exceptions import DataError

logger = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5


class ProbabilityModel(Protocol):
    def predict_proba(self, images: np.ndarray) -> np.ndarray: ...


@dataclass
class Evaluation:
    """Accuracy and 2x2 confusion matrix (rows = truth, columns = prediction)."""

    accuracy: float
    confusion: np.ndarray

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    @property
    def true_negatives(self) -> int:
        return int(self.confusion[HEALTHY, HEALTHY])

    @property
    def true_positives(self) -> int:
        return int(self.confusion[UNHEALTHY, UNHEALTHY])

    @property
    def false_positives(self) -> int:
        return int(self.confusion[HEALTHY, UNHEALTHY])

    @property
    def false_negatives(self) -> int:
        return int(self.confusion[UNHEALTHY, HEALTHY])


def predict_labels(probabilities: np.ndarray) -> np.ndarray:
    """Probability >= 0.5 predicts unhealthy."""
    return (np.asarray(probabilities) >= DECISION_THRESHOLD).astype(np.int64)


def score(labels: np.ndarray, probabilities: np.ndarray) -> Evaluation:
    predictions = predict_labels(probabilities)
    matrix = confusion_matrix(labels, predictions, labels=[HEALTHY, UNHEALTHY])
    return Evaluation(accuracy=float(accuracy_score(labels, predictions)), confusion=matrix)


def require_all_real(dataset: Dataset, role: str):
    """Raise if synthetic images leaked into an evaluation split."""
    if not dataset.is_all_real():
        leaked = int(np.sum(dataset.provenance != "real"))
        raise DataError(f"{leaked} synthetic images found in the {role} data")


def evaluate(model: ProbabilityModel, dataset: Dataset) -> Evaluation:
    """
    Accuracy and confusion matrix of ``model`` on ``dataset``.

    Raises:
        DataError: empty dataset
    """
    if len(dataset) == 0:
        raise DataError("Cannot evaluate on an empty dataset")
    probabilities = np.asarray(model.predict_proba(dataset.images)).reshape(-1)
    return score(dataset.labels, probabilities)
