"""Seeded synthetic segmentation scenes and the two noise processes.

Scenes are a minority foreground class made of rough star-shaped blobs on a
textured background. Every random draw comes from a Philox counter-based
generator whose stream is fixed by ``(seed, key path)``, so scene ``i`` of a
dataset depends only on the master seed and ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .edt import mask_distance_field
from .errors import GenerationError, ValidationError
from .imagery import FloatImage, LabelMask

MAX_ATTEMPTS = 100


class Rng:
    """Philox stream addressed by ``(seed, key)``.

    ``child(k)`` derives an independent stream without consuming anything
    from the parent, so the order in which children are created or used
    does not matter.
    """

    def __init__(self, seed: int, key: tuple = ()):
        if not 0 <= int(seed) < 2**64:
            raise ValidationError(f"seed must fit in 64 unsigned bits, got {seed}")
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        self.generator = np.random.Generator(np.random.Philox(seq))

    def child(self, *key: int) -> "Rng":
        return Rng(self.seed, self.key + key)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"


@dataclass(frozen=True)
class SceneParams:
    width: int = 64
    height: int = 64
    num_blobs: tuple[int, int] = (1, 4)
    coverage: tuple[float, float] = (0.05, 0.10)
    roughness: float = 0.3
    contrast: float = 0.5
    channels: int = 3
    edge_blur: float = 1.0

    def __post_init__(self):
        if self.width < 32 or self.height < 32:
            raise ValidationError(f"scenes must be at least 32x32, got {self.width}x{self.height}")
        lo, hi = self.coverage
        if not 0 < lo <= hi < 1:
            raise ValidationError(f"coverage range must satisfy 0 < lo <= hi < 1, got {self.coverage}")
        if not 1 <= self.num_blobs[0] <= self.num_blobs[1]:
            raise ValidationError(f"bad blob count range {self.num_blobs}")
        if self.roughness < 0:
            raise ValidationError("roughness must be >= 0")
        if not 0 < self.contrast <= 1:
            raise ValidationError("contrast must lie in (0, 1]")
        if self.channels not in (1, 3):
            raise ValidationError("channels must be 1 or 3")
        if self.edge_blur < 0:
            raise ValidationError("edge_blur must be >= 0")


@dataclass
class _Blob:
    cx: float
    cy: float
    angle: float
    aspect: float
    share: float
    amps: np.ndarray = field(repr=False)
    phases: np.ndarray = field(repr=False)


def _draw_blobs(params: SceneParams, g: np.random.Generator) -> list[_Blob]:
    count = int(g.integers(params.num_blobs[0], params.num_blobs[1] + 1))
    blobs = []
    for _ in range(count):
        harmonics = np.arange(2, 8)
        blobs.append(
            _Blob(
                cx=g.uniform(0.1, 0.9) * (params.width - 1),
                cy=g.uniform(0.1, 0.9) * (params.height - 1),
                angle=g.uniform(0.0, np.pi),
                aspect=float(np.exp(g.normal(0.0, 0.3))),
                share=g.uniform(0.5, 1.5),
                amps=params.roughness * g.uniform(0.0, 1.0, harmonics.size) / harmonics,
                phases=g.uniform(0.0, 2 * np.pi, harmonics.size),
            )
        )
    total = sum(b.share for b in blobs)
    for b in blobs:
        b.share /= total
    return blobs


def _blob_geometry(blob: _Blob, shape: tuple[int, int]):
    """Normalised polar coordinates of every pixel and the blob's radius profile."""
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64)
    dx, dy = xs - blob.cx, ys - blob.cy
    c, s = np.cos(blob.angle), np.sin(blob.angle)
    u = (dx * c + dy * s) / blob.aspect
    v = (-dx * s + dy * c) * blob.aspect
    rho = np.hypot(u, v)
    phi = np.arctan2(v, u)
    k = np.arange(2, 2 + blob.amps.size)
    wobble = (blob.amps[:, None, None] * np.sin(k[:, None, None] * phi + blob.phases[:, None, None])).sum(0)
    profile = np.maximum(1.0 + wobble, 0.2)
    return rho, profile


def _rasterize(geometry, blobs, scale: float) -> np.ndarray:
    fg = None
    for (rho, profile), blob in zip(geometry, blobs):
        inside = rho <= scale * np.sqrt(blob.share) * profile
        fg = inside if fg is None else fg | inside
    return fg


def _fit_scale(geometry, blobs, target_px: float, n_px: int) -> np.ndarray:
    # foreground area grows monotonically with the common scale factor
    lo, hi = 0.0, 1.0
    while _rasterize(geometry, blobs, hi).sum() < target_px and hi < 1e4:
        hi *= 2.0
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _rasterize(geometry, blobs, mid).sum() < target_px:
            lo = mid
        else:
            hi = mid
    best = min((lo, hi), key=lambda s: abs(_rasterize(geometry, blobs, s).sum() - target_px))
    return _rasterize(geometry, blobs, best)


def _smooth_field(g: np.random.Generator, shape, amplitude: float) -> np.ndarray:
    ys, xs = np.mgrid[0 : shape[0], 0 : shape[1]].astype(np.float64)
    out = np.zeros(shape)
    for _ in range(3):
        fx, fy = g.uniform(-0.15, 0.15, 2)
        out += np.sin(fx * xs + fy * ys + g.uniform(0, 2 * np.pi))
    return amplitude * out / 3.0


def _render(params: SceneParams, fg: np.ndarray, g: np.random.Generator) -> np.ndarray:
    h, w, nc = params.height, params.width, params.channels
    bg_color = g.uniform(0.35, 0.55, nc)
    direction = g.normal(0.0, 1.0, nc)
    if nc == 1:
        direction = np.abs(direction)
    direction /= np.linalg.norm(direction)
    fg_color = bg_color + 0.3 * params.contrast * direction
    alpha = fg.astype(np.float64)
    if params.edge_blur > 0:
        alpha = ndimage.gaussian_filter(alpha, params.edge_blur, mode="nearest")
    shading = _smooth_field(g, (h, w), 0.08)
    img = (1.0 - alpha)[..., None] * bg_color + alpha[..., None] * fg_color
    img = img + shading[..., None]
    img = img + g.normal(0.0, 0.08, (h, w, nc))
    return np.clip(img, 0.0, 1.0)


def generate_scene(params: SceneParams, rng: Rng) -> tuple[FloatImage, LabelMask]:
    """Render one (image, mask) pair whose foreground coverage lies in ``params.coverage``.

    Raises :class:`GenerationError` if 100 draws in a row miss the coverage range.
    """
    shape = (params.height, params.width)
    n_px = params.height * params.width
    lo, hi = params.coverage
    for attempt in range(MAX_ATTEMPTS):
        g = rng.child(attempt).generator
        blobs = _draw_blobs(params, g)
        geometry = [_blob_geometry(b, shape) for b in blobs]
        target = g.uniform(lo, hi) * n_px
        fg = _fit_scale(geometry, blobs, target, n_px)
        cover = fg.sum() / n_px
        if lo <= cover <= hi:
            image = FloatImage(_render(params, fg, g))
            return image, LabelMask(fg.astype(np.int64), 2)
    raise GenerationError(
        f"could not reach foreground coverage {params.coverage} in {MAX_ATTEMPTS} attempts"
    )


def _disk_offsets(radius: int) -> list[tuple[int, int]]:
    return [
        (dy, dx)
        for dy in range(-radius, radius + 1)
        for dx in range(-radius, radius + 1)
        if dy * dy + dx * dx <= radius * radius
    ]


def perturb_boundary(mask: LabelMask, magnitude: int, rng: Rng, tile: int = 8) -> LabelMask:
    """Simulate annotation error along class boundaries.

    The mask is cut into ``tile`` x ``tile`` blocks. In each block a random
    class is dilated with a random structuring element drawn from the disk
    of radius ``magnitude`` (dilating one class erodes its neighbours).
    Only pixels within ``magnitude`` of a boundary can change.
    """
    magnitude = int(magnitude)
    if magnitude < 0:
        raise ValidationError("magnitude must be >= 0")
    if magnitude == 0:
        return mask
    dist = mask_distance_field(mask)
    if not dist.has_boundary:
        return mask
    near = dist.sq_dist <= magnitude * magnitude
    labels = mask.labels
    padded = np.pad(labels, magnitude, mode="edge")
    out = labels.copy()
    offsets = _disk_offsets(magnitude)
    g = rng.generator
    h, w = labels.shape
    for y0 in range(0, h, tile):
        for x0 in range(0, w, tile):
            y1, x1 = min(y0 + tile, h), min(x0 + tile, w)
            cls = int(g.integers(0, mask.num_classes))
            keep = g.random(len(offsets)) < 0.5
            hit = np.zeros((y1 - y0, x1 - x0), dtype=bool)
            for (dy, dx), use in zip(offsets, keep):
                if not use:
                    continue
                window = padded[
                    y0 + magnitude + dy : y1 + magnitude + dy,
                    x0 + magnitude + dx : x1 + magnitude + dx,
                ]
                hit |= window == cls
            block = out[y0:y1, x0:x1]
            block[hit & near[y0:y1, x0:x1]] = cls
    return LabelMask(out, mask.num_classes)


def add_gaussian_noise(img: FloatImage, sigma: float, rng: Rng) -> FloatImage:
    """Add i.i.d. N(0, sigma^2) to every channel value and clamp to [0, 1]."""
    if sigma < 0:
        raise ValidationError("noise sigma must be >= 0")
    if sigma == 0:
        return img
    noisy = img.data + rng.generator.normal(0.0, sigma, img.data.shape)
    return FloatImage(np.clip(noisy, 0.0, 1.0))
