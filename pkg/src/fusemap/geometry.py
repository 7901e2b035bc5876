"""Planar poses, rigid 3D transforms and shared linear-algebra helpers.

Conventions used throughout the package: the world frame is right-handed
with z up and the floor at z = 0; angles are counterclockwise-positive
radians measured from world +x and stored wrapped to (-pi, pi]; camera
frames follow the optical convention (x right, y down, z forward).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle in radians to (-pi, pi]; -pi maps to +pi."""
    a = float(a)
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    w = (a + math.pi) % _TWO_PI - math.pi
    if w == -math.pi:
        w = math.pi
    return w


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position in meters, heading in radians (wrapped)."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("pose coordinates must be finite")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @staticmethod
    def identity() -> Pose2:
        return Pose2(0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=np.float64)


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Return a (+) b: pose b expressed in a's frame, mapped to a's parent frame."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def invert(p: Pose2) -> Pose2:
    """Inverse pose: compose(p, invert(p)) is the identity."""
    c, s = math.cos(p.theta), math.sin(p.theta)
    return Pose2(-(c * p.x + s * p.y), -(-s * p.x + c * p.y), -p.theta)


@dataclass(frozen=True)
class RigidTransform3:
    """Proper rigid transform in 3D: p_out = rotation @ p_in + translation.

    The rotation must be orthonormal with determinant +1 (checked to 1e-9
    on construction). Arrays are copied and frozen.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=np.float64)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ValueError("transform entries must be finite")
        if np.max(np.abs(r @ r.T - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant must be +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> RigidTransform3:
        return RigidTransform3(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.ndim == 1:
            return self.rotation @ pts + self.translation
        return pts @ self.rotation.T + self.translation

    def compose(self, other: RigidTransform3) -> RigidTransform3:
        """self applied after other: (self * other)(p) = self(other(p))."""
        return RigidTransform3(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> RigidTransform3:
        rt = self.rotation.T
        return RigidTransform3(rt, -(rt @ self.translation))


def pose2_to_transform3(p: Pose2, mount: RigidTransform3 | None = None) -> RigidTransform3:
    """Lift a planar pose to 3D and append a fixed sensor mounting transform.

    The planar pose rotates about the vertical axis at (x, y, 0); `mount`
    is the sensor's transform in the robot base frame. The result maps
    sensor-frame points into the world frame.
    """
    c, s = math.cos(p.theta), math.sin(p.theta)
    base = RigidTransform3(
        np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]),
        np.array([p.x, p.y, 0.0]),
    )
    if mount is None:
        return base
    return base.compose(mount)


def transform_to_pose2(t: RigidTransform3) -> Pose2:
    """Planar pose of a robot-frame transform (yaw from the rotation's
    first column; valid when the rotation is about the vertical axis)."""
    return Pose2(
        float(t.translation[0]),
        float(t.translation[1]),
        math.atan2(t.rotation[1, 0], t.rotation[0, 0]),
    )


def rotation_angle(rotation: np.ndarray) -> float:
    """Magnitude of the rotation in radians, in [0, pi]."""
    r = np.asarray(rotation, dtype=np.float64)
    c = (np.trace(r) - 1.0) / 2.0
    return float(math.acos(min(1.0, max(-1.0, c))))


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    max_depth: float

    def __post_init__(self) -> None:
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        if self.max_depth <= 0:
            raise ValueError("max_depth must be positive")


def symmetrize(m: np.ndarray) -> np.ndarray:
    """Exactly symmetric copy of a square matrix."""
    m = np.asarray(m, dtype=np.float64)
    return (m + m.T) / 2.0


def check_covariance(m: np.ndarray, sym_tol: float = 1e-12, eig_tol: float = -1e-12) -> np.ndarray:
    """Validate a covariance matrix: symmetric and positive semi-definite.

    Returns the matrix as float64; raises ValueError on violation. For the
    planar EKF the diagonal units are m^2, m^2, rad^2.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"covariance must be square, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("covariance entries must be finite")
    if np.max(np.abs(m - m.T)) > sym_tol:
        raise ValueError("covariance is not symmetric")
    if np.min(np.linalg.eigvalsh(m)) < eig_tol:
        raise ValueError("covariance is not positive semi-definite")
    return m
