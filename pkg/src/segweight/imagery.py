"""In-memory raster types and their file formats.

Masks and images travel as 8-bit PNG, weight maps and distance fields as
little-endian grayscale PFM. In memory everything is row-major with the
origin at the top-left pixel; the bottom-up scanline order of PFM is
handled only inside :func:`save_pfm` / :func:`load_pfm`.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import FormatError, ValidationError

_PFM_HEADER = re.compile(rb"^Pf\s+(\d+)\s+(\d+)\s+(\S+)\s", re.ASCII)


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.ascontiguousarray(array)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class LabelMask:
    """Per-pixel class indices, shape ``(height, width)``."""

    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 2:
            raise ValidationError(f"labels must be 2-D, got shape {labels.shape}")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ValidationError(f"labels must be integers, got {labels.dtype}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            bad = np.argwhere((labels < 0) | (labels >= self.num_classes))[0]
            raise ValidationError(
                f"label {labels[tuple(bad)]} at (x={bad[1]}, y={bad[0]}) "
                f"outside [0, {self.num_classes})"
            )
        if self.num_classes < 2:
            raise ValidationError(f"num_classes must be >= 2, got {self.num_classes}")
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int64, copy=False)))

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape

    def __eq__(self, other):
        if not isinstance(other, LabelMask):
            return NotImplemented
        return self.num_classes == other.num_classes and np.array_equal(self.labels, other.labels)


@dataclass(frozen=True, eq=False)
class FloatImage:
    """Image with values in ``[0, 1]``, shape ``(height, width, channels)``."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3 or data.shape[2] not in (1, 3):
            raise ValidationError(f"image must be HxW, HxWx1 or HxWx3, got {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("image contains non-finite values")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ValidationError("image values must lie in [0, 1]")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]


@dataclass(frozen=True, eq=False)
class WeightMap:
    """Non-negative per-pixel loss weights, shape ``(height, width)``.

    Weights are held as float32, the precision of the PFM files they are
    cached in, so a map computed on the fly and one read back from disk are
    the same object bit for bit. Arithmetic on them is done in float64.
    """

    weights: np.ndarray

    def __post_init__(self):
        weights = np.asarray(self.weights)
        if weights.ndim != 2:
            raise ValidationError(f"weights must be 2-D, got shape {weights.shape}")
        weights = weights.astype(np.float32, copy=False)
        if not np.all(np.isfinite(weights)):
            raise ValidationError("weights contain non-finite values")
        if weights.size and weights.min() < 0:
            raise ValidationError("weights must be non-negative")
        object.__setattr__(self, "weights", _frozen(weights))

    @property
    def height(self) -> int:
        return self.weights.shape[0]

    @property
    def width(self) -> int:
        return self.weights.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.weights.shape

    @classmethod
    def ones(cls, shape: tuple[int, int]) -> "WeightMap":
        return cls(np.ones(shape, dtype=np.float32))

    def __eq__(self, other):
        if not isinstance(other, WeightMap):
            return NotImplemented
        return self.weights.tobytes() == other.weights.tobytes() and self.shape == other.shape


def _open_png(path) -> Image.Image:
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise FormatError(f"{path}: cannot decode image ({exc})") from exc
    return img


def load_mask(path, num_classes: int) -> LabelMask:
    """Read an 8-bit single-channel PNG whose pixel values are class indices."""
    img = _open_png(path)
    if img.mode not in ("L", "P"):
        raise FormatError(f"{path}: mask must be 8-bit single channel, got mode {img.mode}")
    labels = np.asarray(img, dtype=np.uint8)
    return LabelMask(labels, num_classes)


def save_mask(mask: LabelMask, path) -> None:
    if mask.num_classes > 256:
        raise ValidationError("PNG masks hold at most 256 classes")
    Image.fromarray(mask.labels.astype(np.uint8), mode="L").save(path)


def load_image(path) -> FloatImage:
    """Read an 8-bit grayscale or RGB PNG, scaling bytes to ``[0, 1]``."""
    img = _open_png(path)
    if img.mode not in ("L", "RGB"):
        raise FormatError(f"{path}: unsupported image mode {img.mode} (need 8-bit L or RGB)")
    data = np.asarray(img, dtype=np.float64) / 255.0
    return FloatImage(data)


def save_image(image: FloatImage, path) -> None:
    data = np.rint(image.data * 255.0).astype(np.uint8)
    if image.channels == 1:
        Image.fromarray(data[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(data, mode="RGB").save(path)


def save_pfm(array: np.ndarray, path) -> None:
    """Write a 2-D array as a grayscale little-endian PFM (``Pf``, scale -1)."""
    array = np.asarray(array)
    if array.ndim != 2:
        raise ValidationError(f"PFM export needs a 2-D array, got shape {array.shape}")
    height, width = array.shape
    body = np.flipud(array).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        fh.write(body)


def load_pfm(path) -> np.ndarray:
    """Read a grayscale PFM into a top-left-origin float32 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    match = _PFM_HEADER.match(raw[:128])
    if match is None:
        raise FormatError(f"{path}: not a grayscale PFM (magic must be 'Pf')")
    width, height = int(match.group(1)), int(match.group(2))
    try:
        scale = float(match.group(3))
    except ValueError:
        raise FormatError(f"{path}: bad PFM scale field {match.group(3)!r}") from None
    if scale == 0.0:
        raise FormatError(f"{path}: PFM scale field must be non-zero")
    dtype = "<f4" if scale < 0 else ">f4"
    body = raw[match.end():]
    expected = width * height * 4
    if len(body) != expected:
        raise FormatError(f"{path}: expected {expected} data bytes, found {len(body)}")
    array = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return np.flipud(array).astype(np.float32)


def save_weight_map(wmap: WeightMap, path) -> None:
    save_pfm(wmap.weights, path)


def load_weight_map(path) -> WeightMap:
    return WeightMap(load_pfm(path))
