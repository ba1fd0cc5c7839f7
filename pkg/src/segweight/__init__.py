"""Pixel-wise loss weighting for semantic segmentation.

Combines inverse-frequency class weights with a boundary-uncertainty term
derived from an exact Euclidean distance transform, and ships the pieces
needed to test the effect end to end: a weighted cross-entropy, a small
numpy segmentation network, a seeded synthetic benchmark and a CLI.
"""

from .errors import (
    FormatError,
    GenerationError,
    SegweightError,
    TrainingError,
    UndefinedMetricError,
    ValidationError,
)
from .imagery import FloatImage, LabelMask, WeightMap
from .edt import BoundaryMap, DistanceField, extract_boundary, squared_edt
from .weighting import (
    ClassStats,
    accumulate_class_stats,
    class_weights,
    combined_weight_map,
    pixel_weights,
    uncertainty_map,
)
from .loss import LossReport, loss_gradient, pixel_ce, softmax, weighted_loss
from .metrics import ConfusionMatrix

__version__ = "0.1.0"

__all__ = [
    "BoundaryMap",
    "ClassStats",
    "ConfusionMatrix",
    "DistanceField",
    "FloatImage",
    "FormatError",
    "GenerationError",
    "LabelMask",
    "LossReport",
    "SegweightError",
    "TrainingError",
    "UndefinedMetricError",
    "ValidationError",
    "WeightMap",
    "accumulate_class_stats",
    "class_weights",
    "combined_weight_map",
    "extract_boundary",
    "loss_gradient",
    "pixel_ce",
    "pixel_weights",
    "softmax",
    "squared_edt",
    "uncertainty_map",
    "weighted_loss",
]
