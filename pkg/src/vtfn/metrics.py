"""Confusion matrices and precision / recall / F1 (percent)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .states import CLASS_NAMES

N_CLASSES = len(CLASS_NAMES)


def confusion_matrix(truth, pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Rows are true classes, columns predicted classes."""
    truth = np.asarray(truth, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if truth.shape != pred.shape:
        raise ValueError("truth and prediction lengths differ")
    return np.bincount(truth * n_classes + pred, minlength=n_classes**2).reshape(n_classes, n_classes)


def _ratio(num, den):
    num = np.asarray(num, dtype=float)
    den = np.asarray(den, dtype=float)
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


@dataclass
class Metrics:
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    @classmethod
    def from_confusion(cls, cm) -> "Metrics":
        cm = np.asarray(cm, dtype=np.int64)
        tp = np.diag(cm).astype(float)
        precision = 100.0 * _ratio(tp, cm.sum(axis=0))
        recall = 100.0 * _ratio(tp, cm.sum(axis=1))
        f1 = _ratio(2 * precision * recall, precision + recall)
        return cls(cm, precision, recall, f1)

    @classmethod
    def from_predictions(cls, truth, pred) -> "Metrics":
        return cls.from_confusion(confusion_matrix(truth, pred))

    @property
    def count(self) -> int:
        return int(self.confusion.sum())

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    def summary(self) -> str:
        return (f"P {self.macro_precision:.2f}  R {self.macro_recall:.2f}  "
                f"F1 {self.macro_f1:.2f}  (n={self.count})")


def confusion_csv(cm) -> str:
    lines = ["," + ",".join(CLASS_NAMES)]
    for name, row in zip(CLASS_NAMES, np.asarray(cm)):
        lines.append(name + "," + ",".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def read_confusion_csv(text: str) -> np.ndarray:
    rows = [ln.split(",") for ln in text.strip().splitlines()]
    if tuple(rows[0][1:]) != CLASS_NAMES or tuple(r[0] for r in rows[1:]) != CLASS_NAMES:
        raise ValueError("confusion CSV labels do not match class names")
    return np.array([[int(v) for v in r[1:]] for r in rows[1:]], dtype=np.int64)
