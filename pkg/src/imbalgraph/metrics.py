"""Confusion-matrix evaluation for imbalanced node classification.

Conventions: recall and precision of a class with an empty row/column are
0 (and flagged in the log); balanced accuracy and macro F1 average over
all classes, not just the ones present in the split.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np

from .graphcore import LabelSet

logger = logging.getLogger(__name__)

METRIC_KEYS = ("acc", "f1_macro", "bacc", "tpr", "minor_acc")


@dataclass(frozen=True)
class MetricsBundle:
    acc: float
    f1_macro: float
    bacc: float
    tpr: float
    minor_acc: float
    confusion: np.ndarray

    def to_dict(self) -> dict:
        """Plain-type dict with fixed key order (acc, f1_macro, bacc, tpr, minor_acc, confusion)."""
        return {
            "acc": float(self.acc),
            "f1_macro": float(self.f1_macro),
            "bacc": float(self.bacc),
            "tpr": float(self.tpr),
            "minor_acc": float(self.minor_acc),
            "confusion": self.confusion.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv_row(self) -> str:
        return ",".join("%.12g" % getattr(self, key) for key in METRIC_KEYS)


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> np.ndarray:
    """C x C counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("prediction and truth arrays differ in length")
    flat = np.bincount(y_true * num_classes + y_pred, minlength=num_classes * num_classes)
    return flat.reshape(num_classes, num_classes)


def per_class_recall(confusion: np.ndarray) -> np.ndarray:
    row_totals = confusion.sum(axis=1)
    recall = np.zeros(len(confusion), dtype=np.float64)
    present = row_totals > 0
    recall[present] = np.diag(confusion)[present] / row_totals[present]
    return recall


def balanced_accuracy(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> float:
    """Unweighted mean of per-class recalls (absent classes count as 0)."""
    return float(per_class_recall(confusion_matrix(y_true, y_pred, num_classes)).mean())


def bundle_from_confusion(confusion: np.ndarray, minority_class: int) -> MetricsBundle:
    """Derive the full metric set from raw counts."""
    confusion = np.asarray(confusion, dtype=np.int64)
    if confusion.ndim != 2 or confusion.shape[0] != confusion.shape[1]:
        raise ValueError("confusion matrix must be square")
    if np.any(confusion < 0):
        raise ValueError("confusion counts must be non-negative")
    total = confusion.sum()
    if total == 0:
        raise ValueError("confusion matrix is empty")

    num_classes = confusion.shape[0]
    diag = np.diag(confusion).astype(np.float64)
    row_totals = confusion.sum(axis=1)
    col_totals = confusion.sum(axis=0)
    empty_rows = np.nonzero(row_totals == 0)[0]
    if len(empty_rows):
        logger.warning("classes %s have no members in this split; their recall counts as 0",
                       empty_rows.tolist())

    recall = per_class_recall(confusion)
    precision = np.zeros(num_classes, dtype=np.float64)
    has_pred = col_totals > 0
    precision[has_pred] = diag[has_pred] / col_totals[has_pred]

    f1 = np.zeros(num_classes, dtype=np.float64)
    denom = precision + recall
    nz = denom > 0
    f1[nz] = 2.0 * precision[nz] * recall[nz] / denom[nz]

    tpr = float(recall[minority_class])
    return MetricsBundle(
        acc=float(diag.sum() / total),
        f1_macro=float(f1.mean()),
        bacc=float(recall.mean()),
        tpr=tpr,
        minor_acc=tpr,
        confusion=confusion,
    )


def minority_class_of(labels: LabelSet) -> int:
    """Least-populous class among real train nodes (lowest id on ties)."""
    counts = labels.train_class_counts(include_synthetic=False)
    if counts.sum() == 0:
        raise ValueError("no real train nodes to derive the minority class from")
    counts = np.where(counts == 0, np.iinfo(np.int64).max, counts)
    return int(np.argmin(counts))


def evaluate(predictions: np.ndarray, labels: LabelSet, split="test", minority_class=None) -> MetricsBundle:
    """Score predictions on one split; synthetic nodes are always excluded.

    ``minority_class`` defaults to the smallest class by real train count,
    which stays meaningful after oversampling has balanced the train set.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    if len(predictions) != len(labels):
        raise ValueError(
            f"got {len(predictions)} predictions for {len(labels)} nodes"
        )
    mask = labels.split_mask(split) & labels.real_mask
    if not mask.any():
        raise ValueError(f"split {split!r} has no real nodes to evaluate")
    if minority_class is None:
        minority_class = minority_class_of(labels)
    confusion = confusion_matrix(labels.labels[mask], predictions[mask], labels.num_classes)
    return bundle_from_confusion(confusion, minority_class)
