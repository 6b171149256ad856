"""
Confusion-matrix metrics: accuracy, weighted F1, binary MCC and the R_K
multiclass MCC. Every zero denominator yields 0 rather than NaN so fold
averages stay defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.metrics import confusion_matrix

from pathology.exceptions import MetricsError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""
    counts: np.ndarray
    class_names: tuple = ()

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise MetricsError(f"confusion matrix must be square, got shape {counts.shape}")
        if (counts < 0).any():
            raise MetricsError("confusion matrix has negative counts")
        counts = counts.astype(np.int64)
        object.__setattr__(self, 'counts', counts)
        names = tuple(str(name) for name in self.class_names) or tuple(str(i) for i in range(counts.shape[0]))
        if len(names) != counts.shape[0]:
            raise MetricsError(f"{len(names)} class names for a {counts.shape[0]}-class matrix")
        object.__setattr__(self, 'class_names', names)

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_names=()):
        """Build from integer label streams; class count comes from the names when given."""
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape:
            raise MetricsError(f"{y_true.shape[0]} true labels but {y_pred.shape[0]} predictions")
        size = len(class_names) if class_names else int(max(y_true.max(initial=-1), y_pred.max(initial=-1)) + 1)
        if size == 0:
            return cls(np.zeros((0, 0), dtype=np.int64), ())
        counts = confusion_matrix(y_true, y_pred, labels=np.arange(size)) if y_true.size else np.zeros((size, size))
        return cls(counts, tuple(class_names))

    @property
    def total(self):
        return int(self.counts.sum())

    @property
    def support(self):
        return self.counts.sum(axis=1)

    def to_dict(self):
        return {'class_names': list(self.class_names), 'counts': self.counts.tolist()}


def _require_total(cm):
    if cm.total <= 0:
        raise MetricsError("empty confusion matrix")


def accuracy(cm):
    _require_total(cm)
    return float(np.trace(cm.counts) / cm.total)


def weighted_f1(cm):
    _require_total(cm)
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    denominator = 2 * tp + fp + fn
    f1 = np.divide(2 * tp, denominator, out=np.zeros_like(tp), where=denominator > 0)
    weights = counts.sum(axis=1)
    return float(np.sum(weights * f1) / weights.sum())


def mcc_binary(tp, fp, tn, fn):
    if min(tp, fp, tn, fn) < 0:
        raise MetricsError("MCC counts must be non-negative")
    tp, fp, tn, fn = (float(x) for x in (tp, fp, tn, fn))
    denominator = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denominator == 0:
        return 0.0
    return float((tp * tn - fp * fn) / np.sqrt(denominator))


def mcc_multiclass(cm):
    """R_K statistic; for two classes it equals mcc_binary with class 1 as positive."""
    _require_total(cm)
    counts = cm.counts.astype(np.float64)
    c = np.trace(counts)
    s = counts.sum()
    t = counts.sum(axis=1)
    p = counts.sum(axis=0)
    denominator = (s * s - np.dot(p, p)) * (s * s - np.dot(t, t))
    if denominator <= 0:
        return 0.0
    return float((c * s - np.dot(p, t)) / np.sqrt(denominator))


def per_class_accuracy(cm):
    """One-vs-rest accuracy of every class: (TP + TN) / total."""
    _require_total(cm)
    counts = cm.counts
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    tn = cm.total - tp - fp - fn
    return {name: float((tp[i] + tn[i]) / cm.total) for i, name in enumerate(cm.class_names)}


def recall(cm, class_name):
    """Fraction of a class's true examples predicted as that class; 0 without support."""
    if class_name not in cm.class_names:
        raise MetricsError(f"unknown class {class_name!r}")
    i = cm.class_names.index(class_name)
    support = cm.counts[i].sum()
    return float(cm.counts[i, i] / support) if support else 0.0


def summarize(cm):
    return {
        'accuracy': accuracy(cm),
        'weighted_f1': weighted_f1(cm),
        'mcc': mcc_multiclass(cm),
        'mcc_definition': 'R_K',
    }
