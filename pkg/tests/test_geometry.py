import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leaper.geometry import (
    ConvexShape,
    SE2Pose,
    angle_diff,
    contact_query,
    cstate_distance,
    normalize_angle,
    overlaps,
    penetration_depth,
    se2_compose,
    se2_inverse,
)

coord = st.floats(-5.0, 5.0, allow_nan=False)
angle = st.floats(-20.0, 20.0, allow_nan=False)
poses = st.builds(SE2Pose, coord, coord, angle)


def close(a, b, tol=1e-9):
    return abs(a.x - b.x) < tol and abs(a.y - b.y) < tol and abs(angle_diff(a.theta, b.theta)) < tol


@given(angle)
def test_normalize_angle_range(t):
    a = normalize_angle(t)
    assert -math.pi < a <= math.pi
    assert math.isclose(math.cos(a), math.cos(t), abs_tol=1e-9)
    assert math.isclose(math.sin(a), math.sin(t), abs_tol=1e-9)


def test_normalize_angle_boundary():
    assert normalize_angle(-math.pi) == pytest.approx(math.pi)
    assert normalize_angle(math.pi) == pytest.approx(math.pi)
    assert SE2Pose(0, 0, 3 * math.pi).theta == pytest.approx(math.pi)


def test_compose_example():
    # Quarter turn then a unit step along the rotated x axis.
    p = se2_compose(SE2Pose(1.0, 0.0, math.pi / 2), SE2Pose(1.0, 0.0, 0.0))
    assert close(p, SE2Pose(1.0, 1.0, math.pi / 2))


@given(poses)
def test_inverse_is_identity(p):
    assert close(se2_compose(p, se2_inverse(p)), SE2Pose(), 1e-8)
    assert close(se2_compose(se2_inverse(p), p), SE2Pose(), 1e-8)


@given(poses, poses, poses)
def test_compose_associative(a, b, c):
    assert close((a @ b) @ c, a @ (b @ c), 1e-7)


@given(poses, poses)
def test_compose_matches_matrix_product(a, b):
    m = a.as_matrix() @ b.as_matrix()
    p = a @ b
    np.testing.assert_allclose(p.as_matrix(), m, atol=1e-9)


@given(poses, st.floats(-1, 1), st.floats(-1, 1))
def test_transform_point_matches_matrix(p, x, y):
    v = p.as_matrix() @ np.array([x, y, 1.0])
    np.testing.assert_allclose(p.transform_point(x, y), v[:2], atol=1e-9)


def test_shape_validation():
    with pytest.raises(ValueError):
        ConvexShape.box(0.0, 1.0)
    with pytest.raises(ValueError):
        ConvexShape.disc(-1.0)
    with pytest.raises(ValueError):
        ConvexShape("triangle")
    with pytest.raises(ValueError):
        ConvexShape.box(1, 1, entity_class="wizard")


def test_shape_inertia_oracle():
    b = ConvexShape.box(0.04, 0.02)
    # Rectangle of sides 2a x 2b: I/m = (4a^2 + 4b^2) / 12.
    assert b.inertia_per_mass() == pytest.approx((0.08**2 + 0.04**2) / 12)
    assert ConvexShape.disc(0.1).inertia_per_mass() == pytest.approx(0.005)


BOX = ConvexShape.box(0.05, 0.05)
DISC = ConvexShape.disc(0.05)


def test_separated_boxes_have_no_contact():
    assert contact_query(BOX, SE2Pose(0, 0), BOX, SE2Pose(0.2, 0)) is None
    assert not overlaps(BOX, SE2Pose(0, 0), BOX, SE2Pose(0.2, 0))


def test_box_box_face_contact():
    m = contact_query(BOX, SE2Pose(0, 0), BOX, SE2Pose(0.09, 0.0))
    assert m is not None
    assert m.normal == pytest.approx((1.0, 0.0))
    assert m.max_penetration == pytest.approx(0.01)
    assert len(m.points) == 2


def test_touching_boxes_report_zero_penetration():
    m = contact_query(BOX, SE2Pose(0, 0), BOX, SE2Pose(0.1, 0.0))
    assert m is not None
    assert m.max_penetration == pytest.approx(0.0, abs=1e-12)
    assert not overlaps(BOX, SE2Pose(0, 0), BOX, SE2Pose(0.1, 0.0))


def test_disc_disc_oracle():
    m = contact_query(DISC, SE2Pose(0, 0), DISC, SE2Pose(0.06, 0.08))
    assert m.max_penetration == pytest.approx(0.0)
    d = penetration_depth(DISC, SE2Pose(0, 0), DISC, SE2Pose(0.03, 0.04))
    assert d == pytest.approx(0.05)
    assert m.normal == pytest.approx((0.6, 0.8))


def test_box_disc_corner():
    # Disc centre beyond the box corner along the diagonal.
    s = 0.05 + 0.04 / math.sqrt(2)
    d = penetration_depth(BOX, SE2Pose(0, 0), DISC, SE2Pose(s, s))
    assert d == pytest.approx(0.01, abs=1e-9)


def test_rotated_box_penetration():
    # A 45 degree box reaches sqrt(2) * 0.05 along x.
    d = penetration_depth(BOX, SE2Pose(0, 0, math.pi / 4), BOX, SE2Pose(0.05 * math.sqrt(2) + 0.04, 0.0))
    assert d == pytest.approx(0.01, abs=1e-9)


@settings(max_examples=300)
@given(poses, poses, st.sampled_from([BOX, DISC, ConvexShape.box(0.08, 0.02)]))
def test_overlap_symmetry(pa, pb, shape_b):
    # Face selection is biased toward the first shape, so only the verdict is symmetric.
    da = penetration_depth(BOX, pa, shape_b, pb)
    db = penetration_depth(shape_b, pb, BOX, pa)
    assert (da > 1e-9) == (db > 1e-9)


@settings(max_examples=200)
@given(poses, st.floats(0.0, 2 * math.pi), st.floats(0.051, 0.2))
def test_box_disc_normal_antisymmetric(pa, phi, r):
    pb = SE2Pose(pa.x + r * math.cos(phi), pa.y + r * math.sin(phi))
    a = contact_query(BOX, pa, DISC, pb)
    b = contact_query(DISC, pb, BOX, pa)
    assert (a is None) == (b is None)
    if a is not None:
        assert a.max_penetration == pytest.approx(b.max_penetration, abs=1e-12)
        assert a.normal == pytest.approx((-b.normal[0], -b.normal[1]), abs=1e-12)


@settings(max_examples=200)
@given(poses, poses)
def test_contact_rigid_invariance(pa, pb):
    g = SE2Pose(0.3, -1.2, 0.7)
    a = contact_query(BOX, pa, DISC, pb)
    b = contact_query(BOX, g @ pa, DISC, g @ pb)
    assert (a is None) == (b is None)
    if a is not None:
        assert a.max_penetration == pytest.approx(b.max_penetration, abs=1e-9)


@settings(max_examples=100)
@given(poses, poses)
def test_normal_is_unit(pa, pb):
    m = contact_query(BOX, pa, ConvexShape.box(0.1, 0.01), pb, margin=0.01)
    if m is not None:
        for p in m.points:
            assert math.hypot(*p.normal) == pytest.approx(1.0)


def test_cstate_distance():
    q1 = [SE2Pose(0, 0, 0), SE2Pose(1, 1, 0)]
    q2 = [SE2Pose(3, 4, 0), SE2Pose(1, 1, math.pi)]
    assert cstate_distance(q1, q2, [1.0, 0.5], char_length=0.1) == pytest.approx(5.0 + 0.5 * 0.1 * math.pi)
    assert cstate_distance(q1, q1, [1.0, 1.0]) == 0.0
    with pytest.raises(ValueError):
        cstate_distance(q1, q2, [1.0])


@given(poses, poses)
def test_cstate_distance_symmetric_nonnegative(a, b):
    d1 = cstate_distance([a], [b], [1.0])
    assert d1 >= 0.0
    assert d1 == pytest.approx(cstate_distance([b], [a], [1.0]))
