import math

import numpy as np
from hypothesis import given, strategies as st

from dedt.geometry import (
    LOG_SCALE_MAX, LOG_SCALE_MIN, BoundingBox, SearchDistribution, Transformation,
    apply, apply_many, center_distance, iou, iou_many, sample_candidates, sample_transforms,
)
import pytest

coord = st.floats(-500, 500)
side = st.floats(0.5, 300)
boxes = st.builds(BoundingBox, coord, coord, side, side)


def test_box_invariants():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 1)
    with pytest.raises(ValueError):
        BoundingBox(0, float("nan"), 1, 1)


def test_apply_examples():
    b = BoundingBox(0, 0, 10, 10)
    assert apply(b, Transformation()) == b
    assert apply(b, Transformation(5, 0, 0)) == BoundingBox(5, 0, 10, 10)
    s = apply(b, Transformation(0, 0, math.log(2)))
    assert s.as_tuple() == pytest.approx((-5, -5, 20, 20), abs=1e-12)


@given(boxes, st.floats(-50, 50), st.floats(-50, 50), st.floats(LOG_SCALE_MIN, LOG_SCALE_MAX))
def test_apply_negate_roundtrip(b, dx, dy, ds):
    t = Transformation(dx, dy, ds)
    back = apply(apply(b, t), t.negate())
    assert np.allclose(back.as_tuple(), b.as_tuple(), atol=1e-9 * max(1.0, abs(b.x), abs(b.y), b.w))


@given(boxes, st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20), st.floats(-0.6, 0.6)), min_size=1, max_size=5))
def test_apply_many_matches_apply(b, ts):
    got = apply_many(b, np.array(ts))
    want = [apply(b, Transformation(*t)).as_tuple() for t in ts]
    assert np.allclose(got, want)


def test_sampling_contract():
    rng = np.random.default_rng(3)
    t = sample_transforms(1000, SearchDistribution(8.0, 0.05), rng)
    assert t.shape == (1000, 3)
    assert np.all(t[0] == 0)
    assert np.all((t[:, 2] >= LOG_SCALE_MIN) & (t[:, 2] <= LOG_SCALE_MAX))
    a = sample_candidates(BoundingBox(1, 2, 10, 20), 50, SearchDistribution(3, 0.1), np.random.default_rng(5))
    b = sample_candidates(BoundingBox(1, 2, 10, 20), 50, SearchDistribution(3, 0.1), np.random.default_rng(5))
    assert a == b and len(a) == 50
    assert a[0][1] == BoundingBox(1, 2, 10, 20)


def test_zero_variance_sampling():
    prev = BoundingBox(4, 4, 8, 8)
    cands = sample_candidates(prev, 7, SearchDistribution(0, 0), np.random.default_rng(0))
    assert all(b == prev for _, b in cands)


def test_scale_clamped():
    t = sample_transforms(500, SearchDistribution(0, 5.0), np.random.default_rng(0))
    assert t[:, 2].min() == LOG_SCALE_MIN and t[:, 2].max() == LOG_SCALE_MAX


def test_search_around():
    d = SearchDistribution.around(BoundingBox(0, 0, 40, 20))
    assert d.sigma_xy == 10.0 and d.sigma_s == 0.05


def test_iou_examples():
    a = BoundingBox(0, 0, 10, 10)
    assert iou(a, a) == 1.0
    assert iou(a, BoundingBox(20, 20, 5, 5)) == 0.0
    assert iou(a, BoundingBox(5, 0, 10, 10)) == pytest.approx(1 / 3, abs=1e-15)


@given(boxes, boxes)
def test_iou_properties(a, b):
    v = iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == iou(b, a)
    assert iou(a, a) == pytest.approx(1.0)
    assert iou_many(a.as_array(), b.as_array())[0] == pytest.approx(v, abs=1e-12)


def test_center_distance():
    d = center_distance(np.array([[0, 0, 10, 10]]), np.array([0, 30, 10, 10]))
    assert d[0] == 30.0
