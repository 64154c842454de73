"""Accuracy, per-class precision/recall/F1 and macro-F1 from a confusion matrix."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from depfuse.data import LABELS


def confusion_matrix(gold, pred, num_classes: int = len(LABELS)) -> np.ndarray:
    """Counts with rows = gold class, columns = predicted class."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for g, p in zip(gold, pred):
        cm[int(g), int(p)] += 1
    return cm


def _safe_div(a, b):
    return a / b if b else 0.0


@dataclass
class MetricsReport:
    accuracy: float
    macro_f1: float
    precision: list[float]
    recall: list[float]
    f1: list[float]
    confusion: list[list[int]]
    epoch: int | None = None
    split: str = ""
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_confusion(cls, cm, epoch=None, split=""):
        """Classes absent from both gold and predictions score f1 = 0."""
        cm = np.asarray(cm)
        total = int(cm.sum())
        precision, recall, f1 = [], [], []
        for c in range(cm.shape[0]):
            tp = float(cm[c, c])
            p = _safe_div(tp, float(cm[:, c].sum()))
            r = _safe_div(tp, float(cm[c, :].sum()))
            precision.append(p)
            recall.append(r)
            f1.append(_safe_div(2 * p * r, p + r))
        return cls(
            accuracy=_safe_div(float(np.trace(cm)), total),
            macro_f1=float(np.mean(f1)),
            precision=precision,
            recall=recall,
            f1=f1,
            confusion=cm.astype(int).tolist(),
            epoch=epoch,
            split=split,
        )

    @classmethod
    def from_predictions(cls, gold, pred, epoch=None, split=""):
        return cls.from_confusion(confusion_matrix(gold, pred), epoch, split)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "epoch": self.epoch,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": {
                name: {"precision": self.precision[i], "recall": self.recall[i], "f1": self.f1[i]}
                for i, name in enumerate(LABELS)
            },
            "confusion": self.confusion,
            **self.extra,
        }

    def tsv_row(self) -> str:
        ep = "" if self.epoch is None else str(self.epoch)
        f1s = "\t".join(f"{v:.4f}" for v in self.f1)
        return f"{self.split}\t{ep}\t{self.accuracy:.4f}\t{self.macro_f1:.4f}\t{f1s}"

    @staticmethod
    def tsv_header() -> str:
        return "split\tepoch\taccuracy\tmacro_f1\t" + "\t".join(f"f1_{n}" for n in LABELS)
