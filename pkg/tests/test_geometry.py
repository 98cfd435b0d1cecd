import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sceneforge.errors import PreconditionError
from sceneforge.geometry import (
    GraspAnnotation,
    OrientedBox,
    Pose,
    boxes_collide,
    footprint_gap,
    hull_contains,
    hull_volume,
    penetration_depth,
    point_box_distance,
    quat_from_rpy,
    quat_from_yaw,
    quat_multiply,
    quat_pitch,
    quat_rotate,
    quat_yaw,
    simplify_hull,
)

from .oracles import oracle_boxes_collide


def test_quat_yaw_roundtrip():
    for yaw in np.linspace(-math.pi + 1e-6, math.pi - 1e-6, 17):
        assert quat_yaw(quat_from_yaw(yaw)) == pytest.approx(yaw, abs=1e-12)


def test_quat_rotate_unit_z():
    q = quat_from_rpy(0.0, math.pi / 2, 0.0)
    v = quat_rotate(q, [0.0, 0.0, -1.0])
    assert np.allclose(v, [-1.0, 0.0, 0.0], atol=1e-12)


def test_quat_multiply_composes_yaw():
    q = quat_multiply(quat_from_yaw(0.3), quat_from_yaw(0.4))
    assert quat_yaw(q) == pytest.approx(0.7, abs=1e-12)


def test_quat_pitch_extraction():
    assert quat_pitch(quat_from_rpy(0.0, 0.25, 0.0)) == pytest.approx(0.25, abs=1e-12)


def test_pose_validation_rejects_bad_quaternion():
    p = Pose(np.zeros(3), np.array([1.0, 0.0, 0.1, 0.0]))
    with pytest.raises(PreconditionError):
        p.validate()


def test_grasp_annotation_requires_unit_axis():
    ann = GraspAnnotation(Pose.identity(), np.array([0.0, 0.0, -2.0]), 0.05)
    with pytest.raises(PreconditionError):
        ann.validate()


# --- Boxes / SAT ---------------------------------------------------------------

def test_identical_boxes_collide():
    a = OrientedBox(np.zeros(3), np.array([0.1, 0.1, 0.1]))
    assert boxes_collide(a, a)
    assert penetration_depth(a, a) == pytest.approx(0.1)


def test_resting_contact_is_not_collision():
    table = OrientedBox(np.array([0, 0, 0.37]), np.array([1.0, 1.0, 0.74]))
    cube = OrientedBox(np.array([0, 0, 0.74 + 0.025]), np.array([0.05, 0.05, 0.05]))
    assert not boxes_collide(cube, table)


def test_yawed_boxes_separating_axis():
    # 45-degree squares reach +-0.1*sqrt(2) along x: disjoint past 0.283.
    a = OrientedBox(np.array([0.0, 0.0, 0.0]), np.array([0.2, 0.2, 0.1]), yaw=math.pi / 4)
    b = OrientedBox(np.array([0.29, 0.0, 0.0]), np.array([0.2, 0.2, 0.1]), yaw=math.pi / 4)
    assert not boxes_collide(a, b)
    c = OrientedBox(np.array([0.25, 0.0, 0.0]), np.array([0.2, 0.2, 0.1]), yaw=math.pi / 4)
    assert boxes_collide(a, c)


@settings(max_examples=300, deadline=None)
@given(
    ax=st.floats(-0.3, 0.3), ay=st.floats(-0.3, 0.3), az=st.floats(0.0, 0.3),
    ayaw=st.floats(-math.pi, math.pi),
    bx=st.floats(-0.3, 0.3), by=st.floats(-0.3, 0.3), bz=st.floats(0.0, 0.3),
    byaw=st.floats(-math.pi, math.pi),
    aex=st.floats(0.02, 0.3), aey=st.floats(0.02, 0.3), aez=st.floats(0.02, 0.3),
    bex=st.floats(0.02, 0.3), bey=st.floats(0.02, 0.3), bez=st.floats(0.02, 0.3),
)
def test_collision_matches_oracle_and_is_symmetric(ax, ay, az, ayaw, bx, by, bz,
                                                   byaw, aex, aey, aez, bex, bey, bez):
    a = OrientedBox(np.array([ax, ay, az]), np.array([aex, aey, aez]), ayaw)
    b = OrientedBox(np.array([bx, by, bz]), np.array([bex, bey, bez]), byaw)
    got = boxes_collide(a, b)
    assert got == boxes_collide(b, a)
    assert got == oracle_boxes_collide([ax, ay, az], [aex, aey, aez], ayaw,
                                       [bx, by, bz], [bex, bey, bez], byaw)


def test_footprint_gap_touching_and_separated():
    a = OrientedBox(np.zeros(3), np.array([0.1, 0.1, 0.1]))
    b = OrientedBox(np.array([0.1, 0.0, 0.0]), np.array([0.1, 0.1, 0.1]))
    assert footprint_gap(a, b) == pytest.approx(0.0)
    c = OrientedBox(np.array([0.13, 0.0, 0.0]), np.array([0.1, 0.1, 0.1]))
    assert footprint_gap(a, c) == pytest.approx(0.03)


def test_point_box_distance_inside_and_outside():
    box = OrientedBox(np.zeros(3), np.array([0.2, 0.2, 0.2]))
    assert point_box_distance([0.0, 0.0, 0.0], box) == 0.0
    assert point_box_distance([0.2, 0.0, 0.0], box) == pytest.approx(0.1)


# --- Hulls ------------------------------------------------------------------------

def _box_points(extents, center=(0, 0, 0)):
    hx, hy, hz = np.asarray(extents) / 2.0
    pts = np.array([[sx * hx, sy * hy, sz * hz]
                    for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)])
    return pts + np.asarray(center)


def _sphere_points(n=100, radius=0.1, seed=0):
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=(n, 3))
    return raw / np.linalg.norm(raw, axis=1, keepdims=True) * radius


def test_simplify_hull_identity_for_box():
    pts = _box_points([0.1, 0.2, 0.3])
    out = simplify_hull(pts, 8)
    assert len(out) == 8
    assert {tuple(np.round(p, 9)) for p in out} == {tuple(np.round(p, 9)) for p in pts}


def test_simplify_hull_sphere_falls_back_to_aabb_corners():
    pts = _sphere_points(100)
    out = simplify_hull(pts, 8)
    assert len(out) == 8
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    expected = {tuple(np.round([x, y, z], 12))
                for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])}
    assert {tuple(np.round(p, 12)) for p in out} == expected


@pytest.mark.parametrize("seed", range(5))
def test_simplify_hull_contains_all_input_vertices(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-0.2, 0.2, size=(40, 3))
    out = simplify_hull(pts, 8)
    for p in pts:
        assert hull_contains(out, p, slack=1e-9)


def test_simplify_hull_volume_bound_for_boxlike_hulls():
    # A box with shaved corners: AABB inflation stays under the 1.3x bound.
    pts = _box_points([0.2, 0.2, 0.2])
    rng = np.random.default_rng(1)
    jitter = pts * 0.97 + rng.uniform(-0.001, 0.001, size=pts.shape)
    cloud = np.vstack([pts * 0.999, jitter, rng.uniform(-0.09, 0.09, size=(50, 3))])
    out = simplify_hull(cloud, 8)
    assert hull_volume(out) <= 1.3 * hull_volume(cloud)


def test_simplify_hull_rejects_small_target():
    with pytest.raises(PreconditionError):
        simplify_hull(_box_points([0.1, 0.1, 0.1]), 7)


def test_simplify_hull_rejects_degenerate_input():
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    with pytest.raises(PreconditionError):
        simplify_hull(flat, 8)
