"""Confusion matrix with per-class pixel accuracy (recall) and IoU.

Metrics are read off the matrix aggregated over a whole split, not averaged
per image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UndefinedMetricError, ValidationError
from .imagery import LabelMask


def _labels(mask) -> np.ndarray:
    return mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[g, p]`` = number of pixels with ground truth ``g`` predicted as ``p``."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValidationError(f"confusion matrix must be square, got {counts.shape}")
        if (counts < 0).any():
            raise ValidationError("confusion counts must be non-negative")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def empty(cls, num_classes: int) -> "ConfusionMatrix":
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValidationError("cannot add confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)

    def accumulate(self, pred, gt) -> "ConfusionMatrix":
        return accumulate(self, pred, gt)


def accumulate(conf: ConfusionMatrix, pred, gt) -> ConfusionMatrix:
    p = _labels(pred)
    g = _labels(gt)
    if p.shape != g.shape:
        raise ValidationError(f"prediction shape {p.shape} != ground truth shape {g.shape}")
    c = conf.num_classes
    for mask in (pred, gt):
        if isinstance(mask, LabelMask) and mask.num_classes != c:
            raise ValidationError(f"mask has {mask.num_classes} classes, matrix has {c}")
    if p.size and (min(p.min(), g.min()) < 0 or max(p.max(), g.max()) >= c):
        raise ValidationError(f"labels outside [0, {c})")
    flat = g.ravel().astype(np.int64) * c + p.ravel()
    return ConfusionMatrix(conf.counts + np.bincount(flat, minlength=c * c).reshape(c, c))


def pixel_accuracy(conf: ConfusionMatrix, cls: int) -> float:
    """Fraction of ground-truth ``cls`` pixels predicted as ``cls``."""
    row = int(conf.counts[cls].sum())
    if row == 0:
        raise UndefinedMetricError(f"no ground-truth pixels of class {cls}")
    return int(conf.counts[cls, cls]) / row


def precision(conf: ConfusionMatrix, cls: int) -> float:
    col = int(conf.counts[:, cls].sum())
    if col == 0:
        raise UndefinedMetricError(f"no pixels predicted as class {cls}")
    return int(conf.counts[cls, cls]) / col


def iou(conf: ConfusionMatrix, cls: int) -> float:
    tp = int(conf.counts[cls, cls])
    union = int(conf.counts[cls].sum()) + int(conf.counts[:, cls].sum()) - tp
    if union == 0:
        raise UndefinedMetricError(f"class {cls} absent from both prediction and ground truth")
    return tp / union


def summarize(conf: ConfusionMatrix) -> dict:
    """JSON-ready per-class table; undefined metrics become 0 with a flag."""
    rows = []
    for cls in range(conf.num_classes):
        row = {"class": cls}
        for name, fn in (("PA", pixel_accuracy), ("IoU", iou)):
            try:
                row[name] = fn(conf, cls)
            except UndefinedMetricError:
                row[name] = 0.0
                row[f"{name}_undefined"] = True
        rows.append(row)
    return {"per_class": rows, "pixel_total": conf.total}
