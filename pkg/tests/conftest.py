import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def brute_force_sq_edt(is_boundary: np.ndarray) -> np.ndarray:
    """All-pairs nearest-boundary squared distance; independent of the lower-envelope code."""
    ys, xs = np.nonzero(is_boundary)
    h, w = is_boundary.shape
    gy, gx = np.mgrid[0:h, 0:w]
    d = (gy[..., None] - ys) ** 2 + (gx[..., None] - xs) ** 2
    return d.min(axis=-1)


def brute_force_boundary(labels: np.ndarray) -> np.ndarray:
    h, w = labels.shape
    out = np.zeros((h, w), dtype=bool)
    for y in range(h):
        for x in range(w):
            for dy, dx in ((-1, 0), (1, 0), (0, -1), (0, 1)):
                yy, xx = y + dy, x + dx
                if 0 <= yy < h and 0 <= xx < w and labels[yy, xx] != labels[y, x]:
                    out[y, x] = True
    return out


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
