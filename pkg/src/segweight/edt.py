"""Class boundaries and their exact squared Euclidean distance transform.

A pixel is a boundary pixel when one of its 4-neighbours inside the image
carries a different label, so both sides of every label change are marked
and the image frame never is. Distances are computed with the separable
lower-envelope-of-parabolas transform of Felzenszwalb & Huttenlocher
(rows, then columns) and carried as exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .imagery import LabelMask, _frozen

#: value stored in every pixel of a field computed from an empty boundary set
INFINITE_SQ_DIST = np.iinfo(np.int64).max

# internal "no site" marker; larger than any real squared distance we handle
_INF = np.int64(1) << 62


@dataclass(frozen=True, eq=False)
class BoundaryMap:
    is_boundary: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "is_boundary", _frozen(np.asarray(self.is_boundary, dtype=bool)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.is_boundary.shape

    @property
    def height(self) -> int:
        return self.is_boundary.shape[0]

    @property
    def width(self) -> int:
        return self.is_boundary.shape[1]

    @property
    def any(self) -> bool:
        return bool(self.is_boundary.any())


@dataclass(frozen=True, eq=False)
class DistanceField:
    """Squared distance (pixel units) from every pixel to the nearest boundary.

    When ``has_boundary`` is false every entry holds :data:`INFINITE_SQ_DIST`.
    """

    sq_dist: np.ndarray
    has_boundary: bool

    def __post_init__(self):
        object.__setattr__(self, "sq_dist", _frozen(np.asarray(self.sq_dist, dtype=np.int64)))

    @property
    def shape(self) -> tuple[int, int]:
        return self.sq_dist.shape

    def distance(self) -> np.ndarray:
        """Euclidean distance as float64; ``inf`` everywhere for the sentinel field."""
        if not self.has_boundary:
            return np.full(self.shape, np.inf)
        return np.sqrt(self.sq_dist.astype(np.float64))


def extract_boundary(mask: LabelMask) -> BoundaryMap:
    labels = mask.labels
    edge = np.zeros(labels.shape, dtype=bool)
    horiz = labels[:, 1:] != labels[:, :-1]
    vert = labels[1:, :] != labels[:-1, :]
    edge[:, 1:] |= horiz
    edge[:, :-1] |= horiz
    edge[1:, :] |= vert
    edge[:-1, :] |= vert
    return BoundaryMap(edge)


@numba.njit(cache=True)
def _envelope_1d(f, out, v, z):
    # f: squared distances along one line (>= _INF means no site)
    n = f.shape[0]
    k = -1
    for q in range(n):
        if f[q] >= _INF:
            continue
        fq = f[q] + q * q
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        p = v[k]
        s = (fq - (f[p] + p * p)) / (2.0 * (q - p))
        # z[0] is -inf, so this stops at k == 0
        while s <= z[k]:
            k -= 1
            p = v[k]
            s = (fq - (f[p] + p * p)) / (2.0 * (q - p))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    if k < 0:
        for q in range(n):
            out[q] = _INF
        return
    j = 0
    for q in range(n):
        while z[j + 1] < q:
            j += 1
        d = q - v[j]
        out[q] = d * d + f[v[j]]


@numba.njit(cache=True)
def _squared_edt_2d(sites):
    h, w = sites.shape
    tmp = np.empty((h, w), dtype=np.int64)
    out = np.empty((h, w), dtype=np.int64)
    n = max(h, w)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    line = np.empty(n, dtype=np.int64)
    res = np.empty(n, dtype=np.int64)
    for y in range(h):
        for x in range(w):
            line[x] = 0 if sites[y, x] else _INF
        _envelope_1d(line[:w], res[:w], v, z)
        for x in range(w):
            tmp[y, x] = res[x]
    for x in range(w):
        for y in range(h):
            line[y] = tmp[y, x]
        _envelope_1d(line[:h], res[:h], v, z)
        for y in range(h):
            out[y, x] = res[y]
    return out


def squared_edt(boundary: BoundaryMap) -> DistanceField:
    """Exact squared Euclidean distance from each pixel to the nearest boundary pixel.

    Runs in ``O(width * height)``. With no boundary pixels the result is the
    sentinel field (``has_boundary=False``).
    """
    if not boundary.any:
        return DistanceField(np.full(boundary.shape, INFINITE_SQ_DIST, dtype=np.int64), False)
    sq = _squared_edt_2d(np.ascontiguousarray(boundary.is_boundary))
    return DistanceField(sq, True)


def mask_distance_field(mask: LabelMask) -> DistanceField:
    return squared_edt(extract_boundary(mask))
