"""Shared helpers for the test suite: tiny synthetic depth maps, clouds
sampled from box corners, and a default small camera."""

from __future__ import annotations

import numpy as np
import pytest

from fusemap.depth import DepthMap, PointCloud
from fusemap.geometry import CameraIntrinsics


@pytest.fixture
def intr_small() -> CameraIntrinsics:
    return CameraIntrinsics(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101, max_depth=10.0)


def make_depth(values, valid=None) -> DepthMap:
    """DepthMap from a 2D array; by default every positive pixel is valid."""
    values = np.asarray(values, dtype=np.float64)
    if valid is None:
        valid = values > 0
    return DepthMap(np.where(valid, values, 0.0), np.asarray(valid, dtype=bool))


def corner_cloud(rng: np.random.Generator, n_per_face: int = 400, size: float = 1.0) -> PointCloud:
    """Cloud sampling three orthogonal faces of a box corner.

    Constrains all six degrees of freedom, which pure planes do not.
    """
    u = rng.uniform(0.0, size, (3, n_per_face))
    v = rng.uniform(0.0, size, (3, n_per_face))
    zero = np.zeros(n_per_face)
    faces = [
        np.column_stack([u[0], v[0], zero]),
        np.column_stack([u[1], zero, v[1]]),
        np.column_stack([zero, u[2], v[2]]),
    ]
    return PointCloud(np.vstack(faces))
