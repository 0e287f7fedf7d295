"""Label prediction from a trained model and the comparison metrics.

Classification clamps each candidate one-hot label into the visible
layer and picks the label with the lowest free energy. That rule is
deterministic and closed-form over the hidden units, so inference needs
no sampler.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DomainError
from .model import RbmModel, free_energy_batch


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with the fraud class (label 1) as positive."""

    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DomainError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: ConfusionMatrix
    degenerate: tuple[str, ...] = ()  # metrics whose denominator was zero

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> "MetricsReport":
        if cm.total == 0:
            raise DomainError("empty evaluation")
        degenerate = []

        def ratio(num, den, name):
            if den == 0:
                degenerate.append(name)
                return 0.0
            return num / den

        accuracy = (cm.tp + cm.tn) / cm.total
        precision = ratio(cm.tp, cm.tp + cm.fp, "precision")
        recall = ratio(cm.tp, cm.tp + cm.fn, "recall")
        f1 = ratio(2 * precision * recall, precision + recall, "f1")
        return cls(accuracy, precision, recall, f1, cm, tuple(degenerate))

    @classmethod
    def zero(cls) -> "MetricsReport":
        return cls(0.0, 0.0, 0.0, 0.0, ConfusionMatrix(0, 0, 0, 0),
                   ("accuracy", "precision", "recall", "f1"))

    def to_dict(self, epoch: int | None = None) -> dict:
        payload = {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.confusion.tp,
            "fp": self.confusion.fp,
            "fn": self.confusion.fn,
            "tn": self.confusion.tn,
        }
        if epoch is not None:
            payload["epoch"] = epoch
        return payload


def _label_block(model: RbmModel):
    if model.label_span is None:
        raise DomainError("model has no label block")
    return model.label_span


def _candidate_rows(model: RbmModel, features: np.ndarray) -> np.ndarray:
    """(n_labels, n_visible) visible rows, one per clamped label."""
    start, size = _label_block(model)
    expected = model.n_visible - size
    features = np.asarray(features, dtype=float)
    if features.shape != (expected,):
        raise DimensionMismatch(
            f"features have shape {features.shape}, expected ({expected},)")
    rows = np.zeros((size, model.n_visible))
    rows[:, :start] = features[:start]
    rows[:, start + size:] = features[start:]
    rows[np.arange(size), start + np.arange(size)] = 1.0
    return rows


def predict_label(model: RbmModel, features: np.ndarray) -> int:
    """Lowest-free-energy label; ties resolve to the lowest index."""
    rows = _candidate_rows(model, features)
    return int(np.argmin(free_energy_batch(model, rows)))


def predict_labels(model: RbmModel, feature_rows: np.ndarray) -> np.ndarray:
    """Vectorized prediction over many rows."""
    start, size = _label_block(model)
    feature_rows = np.asarray(feature_rows, dtype=float)
    expected = model.n_visible - size
    if feature_rows.ndim != 2 or feature_rows.shape[1] != expected:
        raise DimensionMismatch(
            f"rows have shape {feature_rows.shape}, expected (n, {expected})")
    n = feature_rows.shape[0]
    scores = np.empty((n, size))
    full = np.zeros((n, model.n_visible))
    full[:, :start] = feature_rows[:, :start]
    full[:, start + size:] = feature_rows[:, start:]
    for label in range(size):
        full[:, start:start + size] = 0.0
        full[:, start + label] = 1.0
        scores[:, label] = free_energy_batch(model, full)
    return scores.argmin(axis=1)


def confusion_from_predictions(predicted, actual) -> ConfusionMatrix:
    predicted = np.asarray(predicted)
    actual = np.asarray(actual)
    if predicted.shape != actual.shape:
        raise DimensionMismatch("prediction/label length mismatch")
    tp = int(((predicted == 1) & (actual == 1)).sum())
    fp = int(((predicted == 1) & (actual == 0)).sum())
    fn = int(((predicted == 0) & (actual == 1)).sum())
    tn = int(((predicted == 0) & (actual == 0)).sum())
    return ConfusionMatrix(tp, fp, fn, tn)


def evaluate(model: RbmModel, feature_rows: np.ndarray,
             labels: np.ndarray) -> MetricsReport:
    """Predict every row and report the four comparison metrics."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DomainError("empty test set")
    _, size = _label_block(model)
    if size != 2:
        raise DomainError("evaluation assumes a binary label block")
    predicted = predict_labels(model, feature_rows)
    return MetricsReport.from_confusion(
        confusion_from_predictions(predicted, labels))


def write_metrics_json(report: MetricsReport, path, epoch: int | None = None):
    with open(path, "w") as fh:
        json.dump(report.to_dict(epoch), fh, indent=1)
        fh.write("\n")
