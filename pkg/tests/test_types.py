import math

import pytest
from hypothesis import given, settings, strategies as st

from rescu.errors import InvariantViolation
from rescu.types import (
    Feature, FeatureSet, GroundTruth, GtRegion, InstanceRegion, RecurringPattern, RpMatrix, instance_region,
    normalize_angle, validate_rp_matrix,
)

from conftest import make_fs


def test_feature_rejects_nonpositive_scale():
    with pytest.raises(InvariantViolation):
        Feature(id=0, x=1, y=1, scale=0.0, orientation=0.0, descriptor=(0.0,))


@given(st.floats(-100, 100, allow_nan=False))
def test_orientation_normalized(theta):
    f = Feature(id=0, x=1, y=1, scale=1.0, orientation=theta, descriptor=(0.0,))
    assert 0.0 <= f.orientation < 2 * math.pi
    assert math.isclose(math.cos(f.orientation), math.cos(theta), abs_tol=1e-9)
    assert math.isclose(math.sin(f.orientation), math.sin(theta), abs_tol=1e-9)


def test_normalize_angle_wraps_negative():
    assert normalize_angle(-math.pi / 2) == pytest.approx(1.5 * math.pi)


def test_feature_set_checks_bounds_ids_and_dims():
    f = Feature(id=0, x=5, y=5, scale=1, orientation=0, descriptor=(0.0, 0.0))
    with pytest.raises(InvariantViolation):
        FeatureSet(10, 10, (f,), descriptor_dim=3)
    with pytest.raises(InvariantViolation):
        FeatureSet(10, 10, (Feature(id=0, x=10, y=5, scale=1, orientation=0, descriptor=(0.0,)),), descriptor_dim=1)
    with pytest.raises(InvariantViolation):
        FeatureSet(10, 10, (Feature(id=1, x=1, y=5, scale=1, orientation=0, descriptor=(0.0,)),), descriptor_dim=1)


def test_validate_minimal_urp():
    assert validate_rp_matrix(RpMatrix(rows=((0, 1), (2, 3)))) == []


def test_validate_duplicate_feature():
    problems = validate_rp_matrix(RpMatrix(rows=((0, 1), (2, 0))))
    assert len(problems) == 1 and "duplicate feature" in problems[0]


def test_validate_single_row():
    problems = validate_rp_matrix(RpMatrix(rows=((0, 1, 2),)))
    assert any("m < 2" in p for p in problems)
    assert sum("m < 2" in p for p in problems) == 1


def test_validate_sparse_column():
    problems = validate_rp_matrix(RpMatrix(rows=((0, 1, None), (2, 3, 4))))
    assert problems == ["column 2 has 1 filled cells (< 2)"]


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(5, 395), st.floats(5, 395), st.floats(0.5, 10)), min_size=1, max_size=6))
def test_instance_region_contains_members(pts):
    fs = make_fs([(x, y, s) for x, y, s in pts])
    reg = instance_region(fs, list(range(len(pts))))
    x0, y0, x1, y1 = reg.bbox
    assert x0 < x1 and y0 < y1
    for f in fs.features:
        assert x0 <= f.x <= x1 and y0 <= f.y <= y1


def test_instance_region_clipped_to_image():
    fs = make_fs([(1.0, 1.0, 5.0)], width=50, height=50)
    assert instance_region(fs, [0]).bbox == (0.0, 0.0, 16.0, 16.0)


def test_instance_region_rejects_empty_box():
    with pytest.raises(InvariantViolation):
        InstanceRegion(bbox=(1, 1, 1, 2), member_features=(), centroid=(1, 1))


def test_recurring_pattern_needs_one_region_per_column():
    reg = InstanceRegion(bbox=(0, 0, 1, 1), member_features=(0,), centroid=(0.5, 0.5))
    with pytest.raises(InvariantViolation):
        RecurringPattern(matrix=RpMatrix(rows=((0, 1), (2, 3))), score=0.25, instances=(reg,))


def test_ground_truth_region_validation():
    with pytest.raises(InvariantViolation):
        GtRegion()
    with pytest.raises(InvariantViolation):
        GtRegion(box=(0, 0, 1, 1), polygon=((0, 0), (1, 0), (0, 1)))
    with pytest.raises(InvariantViolation):
        GroundTruth(rps=((),))
