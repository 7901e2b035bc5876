"""Synthetic box-world environment and the depth raycaster.

The world is a flat floor rectangle at z = 0 with axis-aligned boxes on
it and BLE beacons mounted above. World frame: x/y in the floor plane,
z up. Robot frame: x forward, y left, z up. Camera optical frame: z
forward, x right, y down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ble import Beacon
from .depth import CameraIntrinsics, DepthMap
from .geometry import RigidTransform3

_T_EPS = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by its two opposite corners."""

    min_corner: np.ndarray
    max_corner: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.min_corner, dtype=np.float64)
        hi = np.asarray(self.max_corner, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("box corners must be 3-vectors")
        if not np.all(lo < hi):
            raise ValueError("box min corner must be strictly below max per axis")
        lo = lo.copy()
        hi = hi.copy()
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the box surface (0 on the surface)."""
        lo, hi = self.min_corner, self.max_corner
        excess = np.maximum(np.maximum(lo - points, points - hi), 0.0)
        outside = np.linalg.norm(excess, axis=1)
        # inside the box the nearest surface is the closest face
        gap = np.minimum(points - lo, hi - points)
        inside = np.min(gap, axis=1)
        return np.where(outside > 0.0, outside, np.maximum(inside, 0.0))


@dataclass(frozen=True)
class World:
    """Floor rectangle at z = 0, boxes standing on it, beacons overhead."""

    floor_min: tuple[float, float] = (0.0, 0.0)
    floor_max: tuple[float, float] = (20.0, 10.0)
    boxes: tuple[Box, ...] = ()
    beacons: tuple[Beacon, ...] = ()

    def __post_init__(self) -> None:
        if not (self.floor_min[0] < self.floor_max[0] and self.floor_min[1] < self.floor_max[1]):
            raise ValueError("floor extent must have positive area")
        object.__setattr__(self, "boxes", tuple(self.boxes))
        object.__setattr__(self, "beacons", tuple(self.beacons))
        for b in self.beacons:
            x, y = b.position[0], b.position[1]
            if not (
                self.floor_min[0] <= x <= self.floor_max[0]
                and self.floor_min[1] <= y <= self.floor_max[1]
            ):
                raise ValueError(f"beacon {b.id!r} lies outside the floor extent")

    def surface_distance(self, points: np.ndarray) -> np.ndarray:
        """Distance from each point to the nearest surface (floor or box)."""
        points = np.asarray(points, dtype=np.float64)
        ex = np.maximum(
            np.maximum(self.floor_min[0] - points[:, 0], points[:, 0] - self.floor_max[0]), 0.0
        )
        ey = np.maximum(
            np.maximum(self.floor_min[1] - points[:, 1], points[:, 1] - self.floor_max[1]), 0.0
        )
        best = np.sqrt(ex * ex + ey * ey + points[:, 2] ** 2)
        for box in self.boxes:
            best = np.minimum(best, box.surface_distance(points))
        return best


def camera_mount(height: float = 0.5, forward: float = 0.0) -> RigidTransform3:
    """Transform from the camera optical frame to the robot frame.

    The camera looks along the robot's +x axis from the given height.
    """
    rot = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    return RigidTransform3(rot, np.array([forward, 0.0, height]))


def _box_ray_hits(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    """Slab-method ray/box intersection; inf where a ray misses."""
    safe = np.where(np.abs(dirs) < 1e-12, np.where(dirs >= 0, 1e-12, -1e-12), dirs)
    inv = 1.0 / safe
    t1 = (box.min_corner - origin) * inv
    t2 = (box.max_corner - origin) * inv
    t_near = np.max(np.minimum(t1, t2), axis=1)
    t_far = np.min(np.maximum(t1, t2), axis=1)
    hit = (t_far >= t_near) & (t_far > _T_EPS)
    # origin inside the box sees the exit face
    t_hit = np.where(t_near > _T_EPS, t_near, t_far)
    return np.where(hit, t_hit, np.inf)


def raycast_depth(world: World, sensor_pose: RigidTransform3, intr: CameraIntrinsics) -> DepthMap:
    """Render the depth image a pinhole camera at sensor_pose would see.

    Rays go through integer pixel coordinates with unit z in the camera
    frame, so the ray parameter of a hit equals its camera-frame depth.
    Pixels with no hit, or a hit beyond max_depth, are invalid.
    """
    us, vs = np.meshgrid(np.arange(intr.width), np.arange(intr.height))
    dirs_cam = np.stack(
        [
            (us.ravel() - intr.cx) / intr.fx,
            (vs.ravel() - intr.cy) / intr.fy,
            np.ones(us.size),
        ],
        axis=1,
    )
    dirs = dirs_cam @ sensor_pose.rotation.T
    origin = sensor_pose.translation

    # floor plane z = 0, clipped to the floor rectangle
    dz = dirs[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_floor = -origin[2] / dz
    hx = origin[0] + t_floor * dirs[:, 0]
    hy = origin[1] + t_floor * dirs[:, 1]
    floor_ok = (
        np.isfinite(t_floor)
        & (t_floor > _T_EPS)
        & (hx >= world.floor_min[0])
        & (hx <= world.floor_max[0])
        & (hy >= world.floor_min[1])
        & (hy <= world.floor_max[1])
    )
    depth = np.where(floor_ok, t_floor, np.inf)

    for box in world.boxes:
        depth = np.minimum(depth, _box_ray_hits(origin, dirs, box))

    valid = np.isfinite(depth) & (depth <= intr.max_depth)
    values = np.where(valid, depth, 0.0)
    return DepthMap(
        values.reshape(intr.height, intr.width), valid.reshape(intr.height, intr.width)
    )
