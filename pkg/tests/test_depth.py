"""Depth-image pipeline: pinhole back-projection and projection, RANSAC
floor fitting, and heightmap generation."""

from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import make_depth
from fusemap.depth import (
    ColorImage,
    FloorFitError,
    Plane,
    PointCloud,
    RansacParams,
    back_project,
    fit_floor_plane,
    height_map,
    project,
)
from fusemap.geometry import CameraIntrinsics


def one_pixel_depth(intr, u, v, z):
    values = np.zeros((intr.height, intr.width))
    values[v, u] = z
    return make_depth(values)


# ── back_project ────────────────────────────────────────────────────────

def test_principal_ray(intr_small):
    cloud = back_project(one_pixel_depth(intr_small, 50, 50, 2.0), intr_small)
    np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 2.0]], atol=1e-12)


def test_off_axis_pixel():
    intr = CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 160, 101, 10.0)
    cloud = back_project(one_pixel_depth(intr, 150, 50, 2.0), intr)
    np.testing.assert_allclose(cloud.points, [[2.0, 0.0, 2.0]], atol=1e-12)


def test_all_invalid_gives_empty_cloud(intr_small):
    depth = make_depth(np.zeros((101, 101)))
    assert len(back_project(depth, intr_small)) == 0


def test_dimension_mismatch_rejected(intr_small):
    with pytest.raises(ValueError):
        back_project(make_depth(np.ones((50, 50))), intr_small)


def test_depth_beyond_max_rejected(intr_small):
    with pytest.raises(ValueError):
        back_project(one_pixel_depth(intr_small, 10, 10, 11.0), intr_small)


def test_colors_copied_pixel_wise(intr_small):
    values = np.zeros((101, 101))
    values[3, 7] = 1.0
    values[90, 4] = 2.0
    rgb = np.zeros((101, 101, 3), dtype=np.uint8)
    rgb[3, 7] = (10, 20, 30)
    rgb[90, 4] = (40, 50, 60)
    cloud = back_project(make_depth(values), intr_small, color=ColorImage(rgb))
    # row-major pixel order: row 3 before row 90
    np.testing.assert_array_equal(cloud.colors, [[10, 20, 30], [40, 50, 60]])


def test_color_dimension_mismatch(intr_small):
    rgb = np.zeros((50, 50, 3), dtype=np.uint8)
    with pytest.raises(ValueError):
        back_project(one_pixel_depth(intr_small, 1, 1, 1.0), intr_small, color=ColorImage(rgb))


# ── project ─────────────────────────────────────────────────────────────

def test_project_optical_axis(intr_small):
    u, v, z, in_frame = project(np.array([0.0, 0.0, 1.0]), intr_small)
    assert (u, v, z) == pytest.approx((50.0, 50.0, 1.0))
    assert in_frame


def test_project_rejects_nonpositive_z(intr_small):
    with pytest.raises(ValueError):
        project(np.array([0.0, 0.0, -1.0]), intr_small)
    with pytest.raises(ValueError):
        project(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]), intr_small)


def test_project_out_of_frame_flag(intr_small):
    _, _, _, in_frame = project(np.array([5.0, 0.0, 1.0]), intr_small)
    assert not in_frame


def test_round_trip_random_pixels():
    rng = np.random.default_rng(7)
    intr = CameraIntrinsics(231.7, 198.2, 81.4, 57.9, 160, 120, 20.0)
    us = rng.integers(0, intr.width, 5000)
    vs = rng.integers(0, intr.height, 5000)
    zs = rng.uniform(0.1, intr.max_depth, 5000)
    values = np.zeros((intr.height, intr.width))
    values[vs, us] = zs  # later duplicates win; consistent for the check below
    depth = make_depth(values)
    cloud = back_project(depth, intr)
    u2, v2, z2, _ = project(cloud.points, intr)
    vs_m, us_m = np.nonzero(depth.valid)
    assert np.max(np.abs(u2 - us_m)) < 0.5
    assert np.max(np.abs(v2 - vs_m)) < 0.5
    np.testing.assert_allclose(z2, depth.values[vs_m, us_m], rtol=1e-6)


# ── fit_floor_plane ─────────────────────────────────────────────────────

def grid_floor(n=40, size=2.0, z=0.0):
    xs = np.linspace(-size, size, n)
    gx, gy = np.meshgrid(xs, xs)
    return np.column_stack([gx.ravel(), gy.ravel(), np.full(n * n, z)])


def test_exact_plane_recovered():
    cloud = PointCloud(grid_floor())
    plane = fit_floor_plane(cloud, camera_center=(0.0, 0.0, 1.0), down=(0.0, 0.0, -1.0))
    np.testing.assert_allclose(plane.normal, [0.0, 0.0, 1.0], atol=1e-9)
    assert plane.offset == pytest.approx(0.0, abs=1e-9)


def test_plane_with_outliers():
    rng = np.random.default_rng(11)
    floor = grid_floor()
    floor[:, 2] += rng.normal(0.0, 0.005, len(floor))
    n_out = int(0.3 * len(floor) / 0.7)
    outliers = rng.uniform(-0.5, 0.5, (n_out, 3)) + (0.0, 0.0, 0.5)
    cloud = PointCloud(np.vstack([floor, outliers]))
    plane = fit_floor_plane(
        cloud,
        camera_center=(0.0, 0.0, 1.0),
        down=(0.0, 0.0, -1.0),
        rng=np.random.default_rng(3),
    )
    angle = math.degrees(math.acos(abs(float(plane.normal @ [0.0, 0.0, 1.0]))))
    assert angle < 1.0


def test_two_point_cloud_rejected():
    with pytest.raises((FloorFitError, ValueError)):
        fit_floor_plane(PointCloud(np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])))


def test_min_inliers_failure():
    rng = np.random.default_rng(0)
    cloud = PointCloud(rng.uniform(0.0, 1.0, (100, 3)))
    params = RansacParams(iterations=20, inlier_threshold_m=1e-6, min_inliers=90)
    with pytest.raises(FloorFitError):
        fit_floor_plane(cloud, params, rng=np.random.default_rng(1))


def test_normal_oriented_toward_camera():
    cloud = PointCloud(grid_floor(z=2.0))
    plane = fit_floor_plane(cloud, camera_center=(0.0, 0.0, 0.0), down=(0.0, 0.0, 1.0))
    # signed distance of the camera center must be nonnegative
    assert float(plane.normal @ np.zeros(3)) + plane.offset >= 0.0
    np.testing.assert_allclose(plane.normal, [0.0, 0.0, -1.0], atol=1e-9)


# ── height_map ──────────────────────────────────────────────────────────

def test_heights_against_camera_frame_plane(intr_small):
    # plane z = 2 in the camera frame, normal facing the camera
    plane = Plane(np.array([0.0, 0.0, -1.0]), 2.0)
    values = np.zeros((101, 101))
    values[50, 50] = 2.0   # on the plane
    values[10, 60] = 1.5   # 0.5 m toward the camera, along the normal
    hm = height_map(make_depth(values), intr_small, plane)
    assert hm.valid[50, 50] and hm.valid[10, 60]
    assert hm.heights[50, 50] == pytest.approx(0.0, abs=1e-12)
    assert hm.heights[10, 60] == pytest.approx(0.5, abs=1e-9)


def test_invalid_depth_stays_invalid(intr_small):
    plane = Plane(np.array([0.0, 0.0, -1.0]), 2.0)
    values = np.zeros((101, 101))
    values[50, 50] = 2.0
    hm = height_map(make_depth(values), intr_small, plane)
    assert not hm.valid[0, 0]
    assert hm.valid.sum() == 1


def test_height_map_dimension_mismatch(intr_small):
    plane = Plane(np.array([0.0, 0.0, -1.0]), 2.0)
    with pytest.raises(ValueError):
        height_map(make_depth(np.ones((10, 10))), intr_small, plane)


def test_plane_normal_must_be_unit():
    with pytest.raises(ValueError):
        Plane(np.array([0.0, 0.0, 2.0]), 0.0)
