"""Softmax cross-entropy with per-pixel weights, and its gradient w.r.t. logits.

Arrays are channels-last: logits and probabilities have shape
``(height, width, num_classes)``. The weighted loss of an image is::

    total = (1/n) * sum_x w(x) * (-log p_{c(x)}(x))

with ``n`` the number of pixels in the image, zero-weight pixels included.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ValidationError
from .imagery import LabelMask, WeightMap

PROB_FLOOR = 1e-12
_TINY = np.finfo(np.float64).tiny


@dataclass(frozen=True, eq=False)
class LossReport:
    total: float
    per_pixel: Optional[np.ndarray] = None

    def to_json(self) -> dict:
        return {"total": self.total}


def _labels(mask) -> np.ndarray:
    return mask.labels if isinstance(mask, LabelMask) else np.asarray(mask)


def _check_classes(probs: np.ndarray, mask) -> None:
    if isinstance(mask, LabelMask) and mask.num_classes != probs.shape[-1]:
        raise ValidationError(
            f"mask has {mask.num_classes} classes but scores have {probs.shape[-1]} channels"
        )


def _weights(w) -> np.ndarray:
    arr = w.weights if isinstance(w, WeightMap) else np.asarray(w)
    return arr.astype(np.float64, copy=False)


def _check(probs: np.ndarray, labels: np.ndarray, weights: Optional[np.ndarray] = None):
    if probs.ndim != 3:
        raise ValidationError(f"expected (H, W, C) scores, got shape {probs.shape}")
    if labels.shape != probs.shape[:2]:
        raise ValidationError(f"mask shape {labels.shape} != score map shape {probs.shape[:2]}")
    if weights is not None and weights.shape != labels.shape:
        raise ValidationError(f"weight map shape {weights.shape} != mask shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= probs.shape[2]):
        raise ValidationError("mask labels exceed the number of score channels")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Max-subtracted softmax over the last axis.

    Probabilities that would underflow to zero are raised to the smallest
    positive normal double so downstream logs stay finite.
    """
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    return np.maximum(p, _TINY)


def _true_class_prob(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.take_along_axis(probs, labels[..., None].astype(np.intp), axis=-1)[..., 0]


def pixel_ce(probs: np.ndarray, mask) -> np.ndarray:
    """Per-pixel ``-log p_true`` with the probability floored at 1e-12."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(mask)
    _check(probs, labels)
    _check_classes(probs, mask)
    return -np.log(np.maximum(_true_class_prob(probs, labels), PROB_FLOOR))


def weighted_loss(probs: np.ndarray, mask, w, keep_per_pixel: bool = False) -> LossReport:
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(mask)
    weights = _weights(w)
    _check(probs, labels, weights)
    _check_classes(probs, mask)
    terms = weights * pixel_ce(probs, labels)
    # fsum is exactly rounded, hence independent of summation order
    total = math.fsum(terms.ravel().tolist()) / terms.size
    return LossReport(total, terms if keep_per_pixel else None)


def loss_gradient(probs: np.ndarray, mask, w) -> np.ndarray:
    """Gradient of :func:`weighted_loss` with respect to the logits."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = _labels(mask)
    weights = _weights(w)
    _check(probs, labels, weights)
    _check_classes(probs, mask)
    grad = probs.copy()
    np.put_along_axis(
        grad,
        labels[..., None].astype(np.intp),
        _true_class_prob(probs, labels)[..., None] - 1.0,
        axis=-1,
    )
    grad *= (weights / labels.size)[..., None]
    return grad
