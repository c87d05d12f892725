import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tetherplan.geometry import (
    Box,
    Pose,
    Segment,
    compose,
    point_box_distance,
    pose_from_axes,
    rot_x,
    rot_z,
    rotation_angle_deg,
    segment_box_distance,
    segment_capsule_distance,
    segment_segment_distance,
)

from oracles import distance_errors, random_pose

angles = st.floats(-360, 360, allow_nan=False)
coords = st.floats(-500, 500, allow_nan=False)


# --- Pose ----------------------------------------------------------------


def test_identity_compose():
    P = Pose(rot_z(30), [1, 2, 3])
    assert compose(Pose(), P).is_close(P)
    assert compose(P, Pose()).is_close(P)


def test_compose_rotation_of_translated_origin():
    # rotate by 90 about z after translating by x: origin lands on +y
    T = compose(Pose(rot_z(90)), Pose.from_translation(1, 0, 0))
    assert np.allclose(T.apply([0, 0, 0]), [0, 1, 0], atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(angles, angles, coords, coords, coords)
def test_inverse_roundtrip(a, b, x, y, z):
    P = Pose(rot_z(a) @ rot_x(b), [x, y, z])
    I = compose(P, P.inverse())
    assert np.allclose(I.matrix(), np.eye(4), atol=1e-9)
    assert abs(np.linalg.det(P.rotation) - 1.0) < 1e-9


def test_compose_matches_matrix_product():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = random_pose(rng), random_pose(rng)
        assert np.allclose(compose(a, b).matrix(), a.matrix() @ b.matrix(), atol=1e-9)


def test_pose_rejects_bad_rotation():
    with pytest.raises(ValueError):
        Pose(np.diag([1.0, 1.0, -1.0]), [0, 0, 0])


def test_rotation_angle():
    assert rotation_angle_deg(np.eye(3), rot_x(37.0)) == pytest.approx(37.0)


def test_pose_from_axes_orthonormal():
    P = pose_from_axes((0, 0, 1))
    assert np.allclose(P.rotation[:, 0], [0, 0, 1])
    assert np.allclose(P.rotation.T @ P.rotation, np.eye(3))
    assert np.linalg.det(P.rotation) == pytest.approx(1.0)


# --- distances -----------------------------------------------------------


def test_parallel_segments():
    d, _ = segment_segment_distance(Segment((0, 0, 0), (1, 0, 0)), Segment((0, 1, 0), (1, 1, 0)))
    assert d == pytest.approx(1.0)


def test_crossing_segments_touch():
    d, (p, q) = segment_segment_distance(Segment((-1, 0, 0), (1, 0, 0)), Segment((0, -1, 0), (0, 1, 0)))
    assert d == pytest.approx(0.0)
    assert np.allclose(p, 0) and np.allclose(q, 0)


def test_degenerate_segment_is_point():
    d, _ = segment_segment_distance(Segment((0, 0, 2), (0, 0, 2)), Segment((-1, 0, 0), (1, 0, 0)))
    assert d == pytest.approx(2.0)


def test_capsule_penetration_negative():
    assert segment_capsule_distance(Segment((0, 0, 0), (1, 0, 0)), Segment((0, 0.5, 0), (1, 0.5, 0)), 1.0) == pytest.approx(-0.5)


def test_box_inside_is_zero():
    box = Box(Pose(), (10, 10, 10))
    assert segment_box_distance(Segment((0, 0, 0), (1, 1, 1)), box) == 0.0
    assert point_box_distance(np.array([[0, 0, 20.0]]), box)[0] == pytest.approx(10.0)


def test_box_rejects_nonpositive_extent():
    with pytest.raises(ValueError):
        Box(Pose(), (1, 0, 1))


def test_distances_match_dense_sampling():
    """1000 seeded cases per query, sampled oracle within 0.5 mm."""
    worst = distance_errors()
    assert worst["witness"] <= 1e-6
    assert max(worst["segment"], worst["capsule"], worst["box"]) <= 0.5, worst
