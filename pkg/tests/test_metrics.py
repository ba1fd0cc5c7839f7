import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from segweight.errors import UndefinedMetricError, ValidationError
from segweight.imagery import LabelMask
from segweight.metrics import (
    ConfusionMatrix,
    accumulate,
    iou,
    pixel_accuracy,
    precision,
    summarize,
)


def _m(rows, c=2):
    return LabelMask(np.array(rows), c)


def test_perfect_prediction():
    gt = _m([[0, 1], [1, 0]])
    conf = accumulate(ConfusionMatrix.empty(2), gt, gt)
    assert np.trace(conf.counts) == 4
    assert pixel_accuracy(conf, 1) == 1.0 and iou(conf, 1) == 1.0


def test_all_wrong_and_additivity():
    pred, gt = _m([[0, 0], [0, 0]]), _m([[1, 1], [1, 1]])
    conf = accumulate(ConfusionMatrix.empty(2), pred, gt)
    assert conf.counts[1, 0] == 4
    twice = accumulate(conf, pred, gt)
    assert np.array_equal(twice.counts, 2 * conf.counts)
    assert twice == conf + conf


def test_pixel_accuracy_ratio():
    conf = ConfusionMatrix(np.array([[5, 0], [1, 3]]))
    assert pixel_accuracy(conf, 1) == 0.75


def test_pixel_accuracy_undefined():
    conf = ConfusionMatrix(np.array([[5, 2], [0, 0]]))
    with pytest.raises(UndefinedMetricError):
        pixel_accuracy(conf, 1)


def test_iou_cases():
    disjoint = accumulate(
        ConfusionMatrix.empty(2), _m([[1, 1, 0, 0], [1, 1, 0, 0]]), _m([[0, 0, 1, 1], [0, 0, 1, 1]])
    )
    assert iou(disjoint, 1) == 0.0
    overlap = accumulate(
        ConfusionMatrix.empty(2), _m([[1, 1, 1, 1, 0, 0]]), _m([[0, 0, 1, 1, 1, 1]])
    )
    assert iou(overlap, 1) == pytest.approx(2 / 6)
    with pytest.raises(UndefinedMetricError):
        iou(accumulate(ConfusionMatrix.empty(2), _m([[0]]), _m([[0]])), 1)


def test_shape_mismatch():
    with pytest.raises(ValidationError):
        accumulate(ConfusionMatrix.empty(2), _m([[0, 1]]), _m([[0], [1]]))
    with pytest.raises(ValidationError):
        accumulate(ConfusionMatrix.empty(2), _m([[0, 1]], 3), _m([[0, 1]], 3))


def test_summarize_flags_undefined():
    conf = accumulate(ConfusionMatrix.empty(2), _m([[0, 0]]), _m([[0, 0]]))
    out = summarize(conf)
    assert out["pixel_total"] == 2
    assert out["per_class"][1] == {"class": 1, "PA": 0.0, "PA_undefined": True, "IoU": 0.0, "IoU_undefined": True}


pairs = st.integers(0, 2**32 - 1)


@given(pairs)
def test_iou_bounded_by_recall_and_precision(seed):
    rng = np.random.default_rng(seed)
    conf = ConfusionMatrix.empty(3)
    for _ in range(3):
        conf = accumulate(conf, rng.integers(0, 3, (5, 5)), rng.integers(0, 3, (5, 5)))
    for c in range(3):
        try:
            bound = min(pixel_accuracy(conf, c), precision(conf, c))
        except UndefinedMetricError:
            continue
        assert 0 <= iou(conf, c) <= bound + 1e-15


@given(pairs)
def test_accumulation_order_irrelevant(seed):
    rng = np.random.default_rng(seed)
    items = [(rng.integers(0, 4, (3, 4)), rng.integers(0, 4, (3, 4))) for _ in range(5)]
    a = ConfusionMatrix.empty(4)
    for p, g in items:
        a = accumulate(a, p, g)
    b = ConfusionMatrix.empty(4)
    for p, g in reversed(items):
        b = accumulate(b, p, g)
    assert a == b and a.total == 60
