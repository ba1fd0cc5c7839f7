"""Per-pixel loss weights: inverse class frequency times boundary uncertainty.

The weight of pixel ``x`` with ground-truth class ``c`` is::

    w(x) = m / (C * n_c)  *  (1 - exp(-d(x)**2 / (2 * sigma**2)))

where ``n_c`` counts class-``c`` pixels over the training masks, ``m`` is
the total pixel count, ``C`` the number of classes and ``d(x)`` the
Euclidean distance to the nearest class boundary. Pixels on a boundary get
weight 0; pixels far inside a region get the full class weight.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from .edt import DistanceField, mask_distance_field
from .errors import ValidationError
from .imagery import LabelMask, WeightMap, load_weight_map, save_weight_map


@dataclass(frozen=True)
class ClassStats:
    num_classes: int
    pixels_per_class: tuple[int, ...]

    def __post_init__(self):
        if len(self.pixels_per_class) != self.num_classes:
            raise ValidationError(
                f"{len(self.pixels_per_class)} counts given for {self.num_classes} classes"
            )
        if any(n < 0 for n in self.pixels_per_class):
            raise ValidationError("pixel counts must be non-negative")

    @property
    def total_pixels(self) -> int:
        return int(sum(self.pixels_per_class))

    def to_json(self) -> dict:
        return {"m": self.total_pixels, "n_c": list(self.pixels_per_class)}


@dataclass(frozen=True)
class ClassWeights:
    weights: tuple[float, ...]

    def __len__(self):
        return len(self.weights)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=np.float64)

    def digest(self) -> str:
        return hashlib.sha256(self.as_array().tobytes()).hexdigest()[:16]


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not (sigma > 0 and np.isfinite(sigma)):
        raise ValidationError(f"sigma must be a positive finite number, got {sigma}")
    return sigma


def accumulate_class_stats(masks: Iterable[LabelMask]) -> ClassStats:
    """Count pixels per class over a set of (training) masks."""
    counts = None
    num_classes = None
    for mask in masks:
        if num_classes is None:
            num_classes = mask.num_classes
            counts = np.zeros(num_classes, dtype=np.int64)
        elif mask.num_classes != num_classes:
            raise ValidationError(
                f"masks disagree on num_classes ({mask.num_classes} vs {num_classes})"
            )
        counts += np.bincount(mask.labels.ravel(), minlength=num_classes)
    if counts is None:
        raise ValidationError("cannot accumulate class statistics over zero masks")
    return ClassStats(num_classes, tuple(int(n) for n in counts))


def class_weights(stats: ClassStats) -> ClassWeights:
    """Inverse-frequency weights ``m / (C * n_c)``; absent classes get 0."""
    m = stats.total_pixels
    if m == 0:
        raise ValidationError("class statistics cover zero pixels")
    c = stats.num_classes
    return ClassWeights(tuple(m / (c * n) if n > 0 else 0.0 for n in stats.pixels_per_class))


def uncertainty_weight(sq_dist, sigma: float) -> np.ndarray:
    """``1 - exp(-d**2 / (2 sigma**2))`` evaluated in float64 from squared distances."""
    sigma = _check_sigma(sigma)
    sq = np.asarray(sq_dist, dtype=np.float64)
    return -np.expm1(-sq / (2.0 * sigma * sigma))


def _uncertainty(mask: LabelMask, sigma: float, field: Optional[DistanceField]) -> np.ndarray:
    if field is None:
        field = mask_distance_field(mask)
    elif field.shape != mask.shape:
        raise ValidationError(f"distance field {field.shape} does not match mask {mask.shape}")
    if not field.has_boundary:
        _check_sigma(sigma)
        return np.ones(mask.shape, dtype=np.float64)
    return uncertainty_weight(field.sq_dist, sigma)


def uncertainty_map(mask: LabelMask, sigma: float, field: Optional[DistanceField] = None) -> WeightMap:
    """Boundary-uncertainty weights; identically 1 for a mask with no boundary."""
    return WeightMap(_uncertainty(mask, sigma, field))


def class_weight_map(mask: LabelMask, cw: ClassWeights) -> WeightMap:
    return WeightMap(_class_factor(mask, cw))


def _class_factor(mask: LabelMask, cw: ClassWeights) -> np.ndarray:
    if len(cw) != mask.num_classes:
        raise ValidationError(f"{len(cw)} class weights for a {mask.num_classes}-class mask")
    return cw.as_array()[mask.labels]


def combined_weight_map(
    mask: LabelMask,
    cw: ClassWeights,
    sigma: float,
    field: Optional[DistanceField] = None,
) -> WeightMap:
    """Class weight of each pixel's label times its boundary uncertainty."""
    return WeightMap(_class_factor(mask, cw) * _uncertainty(mask, sigma, field))


def pixel_weights(
    mask: LabelMask,
    cw: Optional[ClassWeights] = None,
    sigma: Optional[float] = None,
) -> WeightMap:
    """Weight map for any arm of an experiment.

    ``cw=None`` drops the class factor and ``sigma=None`` drops the
    uncertainty factor; with both absent every pixel weighs 1.
    """
    w = np.ones(mask.shape, dtype=np.float64)
    if cw is not None:
        w = w * _class_factor(mask, cw)
    if sigma is not None:
        w = w * _uncertainty(mask, sigma, None)
    return WeightMap(w)


def mask_digest(mask: LabelMask) -> str:
    h = hashlib.sha256()
    h.update(f"{mask.height}x{mask.width}:{mask.num_classes}:".encode())
    h.update(mask.labels.astype("<i8").tobytes())
    return h.hexdigest()[:24]


class WeightCache:
    """PFM-backed store of weight maps keyed by mask content and weighting arm."""

    def __init__(self, directory):
        self.directory = os.fspath(directory)
        os.makedirs(self.directory, exist_ok=True)

    def _path(self, mask, cw, sigma) -> str:
        cw_key = "nocw" if cw is None else cw.digest()
        sigma_key = "nosigma" if sigma is None else repr(float(sigma))
        return os.path.join(self.directory, f"{mask_digest(mask)}_{cw_key}_s{sigma_key}.pfm")

    def get(self, mask: LabelMask, cw: Optional[ClassWeights], sigma: Optional[float]) -> WeightMap:
        path = self._path(mask, cw, sigma)
        if os.path.exists(path):
            return load_weight_map(path)
        wmap = pixel_weights(mask, cw, sigma)
        tmp = f"{path}.{os.getpid()}.tmp"
        save_weight_map(wmap, tmp)
        os.replace(tmp, path)
        return wmap
