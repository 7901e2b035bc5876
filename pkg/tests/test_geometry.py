"""Pose and transform algebra: composition, inversion, lifting planar
poses to 3D, and the covariance validity checks everything else leans on."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fusemap.geometry import (
    CameraIntrinsics,
    Pose2,
    RigidTransform3,
    check_covariance,
    compose,
    invert,
    pose2_to_transform3,
    rotation_angle,
    symmetrize,
    transform_to_pose2,
    wrap_angle,
)

angles = st.floats(min_value=-50.0, max_value=50.0)
coords = st.floats(min_value=-100.0, max_value=100.0)
poses = st.builds(Pose2, coords, coords, angles)


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# ── wrap_angle ──────────────────────────────────────────────────────────

def test_wrap_zero():
    assert wrap_angle(0.0) == 0.0


def test_wrap_three_pi():
    assert wrap_angle(3.0 * math.pi) == pytest.approx(math.pi)


def test_wrap_negative_pi_maps_to_positive():
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)


def test_wrap_rejects_non_finite():
    with pytest.raises(ValueError):
        wrap_angle(float("nan"))
    with pytest.raises(ValueError):
        wrap_angle(float("inf"))


@given(angles, st.integers(min_value=-5, max_value=5))
@settings(deadline=None)
def test_wrap_periodic(a, k):
    assert wrap_angle(a + 2.0 * math.pi * k) == pytest.approx(wrap_angle(a), abs=1e-9)


def test_wrap_range():
    for a in np.linspace(-20.0, 20.0, 401):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi


# ── Pose2 compose / invert ──────────────────────────────────────────────

def test_pose_theta_wrapped_on_construction():
    assert Pose2(0.0, 0.0, 3.0 * math.pi).theta == pytest.approx(math.pi)


def test_pose_rejects_non_finite():
    with pytest.raises(ValueError):
        Pose2(float("nan"), 0.0, 0.0)


def test_compose_identity_left():
    p = Pose2(1.0, 2.0, 0.5)
    assert compose(Pose2.identity(), p) == p


def test_compose_quarter_turn():
    c = compose(Pose2(1.0, 0.0, math.pi / 2.0), Pose2(1.0, 0.0, 0.0))
    assert c.x == pytest.approx(1.0)
    assert c.y == pytest.approx(1.0)
    assert c.theta == pytest.approx(math.pi / 2.0)


def test_invert_identity():
    assert invert(Pose2.identity()) == Pose2.identity()


def test_invert_pure_translation():
    q = invert(Pose2(2.0, 0.0, 0.0))
    assert (q.x, q.y, q.theta) == pytest.approx((-2.0, 0.0, 0.0))


@given(poses)
@settings(deadline=None)
def test_compose_with_inverse_is_identity(p):
    q = compose(p, invert(p))
    assert (q.x, q.y, q.theta) == pytest.approx((0.0, 0.0, 0.0), abs=1e-9)


@given(poses)
@settings(deadline=None)
def test_invert_is_involution(p):
    q = invert(invert(p))
    assert (q.x, q.y) == pytest.approx((p.x, p.y), abs=1e-9)
    assert wrap_angle(q.theta - p.theta) == pytest.approx(0.0, abs=1e-9)


@given(poses, poses, poses)
@settings(deadline=None)
def test_compose_associative(a, b, c):
    lhs = compose(compose(a, b), c)
    rhs = compose(a, compose(b, c))
    assert (lhs.x, lhs.y) == pytest.approx((rhs.x, rhs.y), abs=1e-9)
    assert wrap_angle(lhs.theta - rhs.theta) == pytest.approx(0.0, abs=1e-9)


# ── RigidTransform3 ─────────────────────────────────────────────────────

def test_transform_rejects_non_orthonormal():
    with pytest.raises(ValueError):
        RigidTransform3(np.eye(3) * 2.0, np.zeros(3))


def test_transform_rejects_reflection():
    r = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(ValueError):
        RigidTransform3(r, np.zeros(3))


def test_transform_arrays_frozen():
    t = RigidTransform3.identity()
    with pytest.raises(ValueError):
        t.rotation[0, 0] = 2.0


def test_apply_single_and_batch_agree():
    t = RigidTransform3(rot_z(0.3), np.array([1.0, -2.0, 0.5]))
    pts = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
    batch = t.apply(pts)
    for i in range(2):
        np.testing.assert_allclose(t.apply(pts[i]), batch[i], atol=1e-12)


def test_compose_matches_nested_apply():
    t1 = RigidTransform3(rot_z(0.4), np.array([1.0, 2.0, 3.0]))
    t2 = RigidTransform3(rot_z(-1.1), np.array([-0.5, 0.0, 1.0]))
    p = np.array([0.3, -0.7, 2.0])
    np.testing.assert_allclose(t1.compose(t2).apply(p), t1.apply(t2.apply(p)), atol=1e-12)


@given(angles, coords, coords, coords)
@settings(deadline=None)
def test_inverse_round_trip(a, x, y, z):
    t = RigidTransform3(rot_z(a), np.array([x, y, z]))
    p = np.array([1.0, 2.0, 3.0])
    np.testing.assert_allclose(t.inverse().apply(t.apply(p)), p, atol=1e-9)


# ── pose2_to_transform3 / transform_to_pose2 ────────────────────────────

def test_lift_identity():
    t = pose2_to_transform3(Pose2.identity())
    np.testing.assert_allclose(t.rotation, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(t.translation, np.zeros(3), atol=1e-12)


def test_lift_vertical_mount_offset():
    mount = RigidTransform3(np.eye(3), np.array([0.0, 0.0, 0.5]))
    t = pose2_to_transform3(Pose2(0.0, 0.0, 0.0), mount)
    np.testing.assert_allclose(t.translation, [0.0, 0.0, 0.5], atol=1e-12)


def test_lift_half_turn():
    t = pose2_to_transform3(Pose2(1.0, 2.0, math.pi))
    np.testing.assert_allclose(t.translation, [1.0, 2.0, 0.0], atol=1e-12)
    assert rotation_angle(t.rotation) == pytest.approx(math.pi)
    # rotation axis is vertical: z maps to z
    np.testing.assert_allclose(t.rotation @ [0.0, 0.0, 1.0], [0.0, 0.0, 1.0], atol=1e-12)


@given(poses)
@settings(deadline=None)
def test_lift_round_trip(p):
    q = transform_to_pose2(pose2_to_transform3(p))
    assert (q.x, q.y) == pytest.approx((p.x, p.y), abs=1e-9)
    assert wrap_angle(q.theta - p.theta) == pytest.approx(0.0, abs=1e-9)


def test_rotation_angle_cases():
    assert rotation_angle(np.eye(3)) == 0.0
    assert rotation_angle(rot_z(math.pi / 2.0)) == pytest.approx(math.pi / 2.0)
    assert rotation_angle(rot_z(-0.3)) == pytest.approx(0.3)


# ── intrinsics and covariance helpers ───────────────────────────────────

def test_intrinsics_validation():
    with pytest.raises(ValueError):
        CameraIntrinsics(0.0, 100.0, 50.0, 50.0, 101, 101, 10.0)
    with pytest.raises(ValueError):
        CameraIntrinsics(100.0, 100.0, 200.0, 50.0, 101, 101, 10.0)
    with pytest.raises(ValueError):
        CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 101, 101, 0.0)


def test_symmetrize():
    m = np.array([[1.0, 2.0], [0.0, 3.0]])
    s = symmetrize(m)
    np.testing.assert_allclose(s, s.T)
    np.testing.assert_allclose(s, [[1.0, 1.0], [1.0, 3.0]])


def test_check_covariance_accepts_psd():
    check_covariance(np.diag([1.0, 2.0, 0.0]))


def test_check_covariance_rejects_asymmetric():
    with pytest.raises(ValueError):
        check_covariance(np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_check_covariance_rejects_negative_eigenvalue():
    with pytest.raises(ValueError):
        check_covariance(np.diag([1.0, -0.5]))
