"""Scan registration and global map accumulation.

Scans arrive in the sensor frame with a pose seed from the localization
filter. Each one is voxel-downsampled, refined against the map's
representative points with point-to-point ICP, then merged into a
voxel-centroid map. The map stays bounded because every voxel holds only
a running centroid and a count.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .depth import PointCloud
from .geometry import Pose2, RigidTransform3, pose2_to_transform3

# Voxel indices are packed three-per-int64 (21 bits each, offset binary),
# so a voxel key is one integer and merges are plain sorted-array ops.
_KEY_OFFSET = 1 << 20
_KEY_BITS = 21


class CorrespondenceError(RuntimeError):
    """ICP found fewer matched pairs than the configured minimum."""


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    max_correspondence_m: float = 0.5
    convergence_eps: float = 1e-4
    min_correspondences: int = 10

    def __post_init__(self) -> None:
        if self.max_iterations <= 0 or self.min_correspondences <= 0:
            raise ValueError("iteration and correspondence counts must be positive")
        if self.max_correspondence_m <= 0 or self.convergence_eps <= 0:
            raise ValueError("max_correspondence_m and convergence_eps must be positive")


@dataclass(frozen=True)
class IcpResult:
    """Outcome of one registration.

    rmse_history holds the post-update RMSE of every iteration, which lets
    callers check that the optimization never got worse.
    """

    transform: RigidTransform3
    rmse: float
    iterations: int
    converged: bool
    correspondences: int
    rmse_history: tuple[float, ...]


@dataclass(frozen=True)
class Scan:
    """Sensor-frame point cloud plus the pose seed it should be placed with."""

    cloud: PointCloud
    seed_pose: Pose2
    seed_cov: np.ndarray
    timestamp: float

    def __post_init__(self) -> None:
        cov = np.asarray(self.seed_cov, dtype=np.float64)
        if cov.shape != (3, 3):
            raise ValueError("seed_cov must be 3x3")
        cov = cov.copy()
        cov.setflags(write=False)
        object.__setattr__(self, "seed_cov", cov)
        if not np.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


def _voxel_keys(points: np.ndarray, voxel_size: float) -> np.ndarray:
    idx = np.floor(points / voxel_size).astype(np.int64)
    if np.any(np.abs(idx) >= _KEY_OFFSET):
        raise ValueError("point coordinates exceed the voxel index range")
    shifted = idx + _KEY_OFFSET
    return (shifted[:, 0] << (2 * _KEY_BITS)) | (shifted[:, 1] << _KEY_BITS) | shifted[:, 2]


def voxel_downsample(cloud: PointCloud, voxel_size: float) -> PointCloud:
    """Reduce a cloud to one centroid per occupied voxel.

    Output order is deterministic (ascending voxel index), and the
    operation is idempotent at a fixed voxel size because a voxel's
    centroid always lies inside that voxel.
    """
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    if len(cloud) == 0:
        return PointCloud(np.empty((0, 3)))
    keys = _voxel_keys(cloud.points, voxel_size)
    uniq, inverse = np.unique(keys, return_inverse=True)
    counts = np.bincount(inverse, minlength=len(uniq))
    sums = np.empty((len(uniq), 3))
    for axis in range(3):
        sums[:, axis] = np.bincount(inverse, weights=cloud.points[:, axis], minlength=len(uniq))
    return PointCloud(sums / counts[:, None])


def _fit_rigid(src: np.ndarray, dst: np.ndarray) -> RigidTransform3:
    """Least-squares rigid transform mapping src onto dst (Kabsch)."""
    src_mean = src.mean(axis=0)
    dst_mean = dst.mean(axis=0)
    cross = (src - src_mean).T @ (dst - dst_mean)
    u, _, vt = np.linalg.svd(cross)
    det = np.linalg.det(vt.T @ u.T)
    rot = vt.T @ np.diag([1.0, 1.0, det]) @ u.T
    return RigidTransform3(rot, dst_mean - rot @ src_mean)


def icp_register(
    source: PointCloud,
    target: PointCloud,
    initial: RigidTransform3 | None = None,
    params: IcpParams | None = None,
    target_tree: cKDTree | None = None,
) -> IcpResult:
    """Point-to-point ICP from source onto target.

    Callers that already hold a kd-tree over the target points can pass
    it to avoid rebuilding one per call.
    """
    params = params or IcpParams()
    if len(source) < 3 or len(target) < 3:
        raise ValueError("ICP needs at least 3 points in each cloud")
    tree = target_tree if target_tree is not None else cKDTree(target.points)
    transform = initial or RigidTransform3.identity()

    history: list[float] = []
    converged = False
    n_matched = 0
    iterations = 0
    prev_rmse = None
    for iterations in range(1, params.max_iterations + 1):
        moved = transform.apply(source.points)
        dist, idx = tree.query(moved, distance_upper_bound=params.max_correspondence_m, workers=-1)
        mask = np.isfinite(dist)
        n_matched = int(mask.sum())
        if n_matched < params.min_correspondences:
            raise CorrespondenceError(
                f"{n_matched} correspondences at iteration {iterations}, "
                f"need {params.min_correspondences}"
            )
        matched_src = moved[mask]
        matched_dst = target.points[idx[mask]]
        delta = _fit_rigid(matched_src, matched_dst)
        transform = delta.compose(transform)
        residual = delta.apply(matched_src) - matched_dst
        rmse = float(np.sqrt(np.mean(np.sum(residual * residual, axis=1))))
        history.append(rmse)
        if prev_rmse is not None and abs(prev_rmse - rmse) < params.convergence_eps:
            converged = True
            break
        prev_rmse = rmse

    return IcpResult(transform, history[-1], iterations, converged, n_matched, tuple(history))


class GlobalMap:
    """Voxel-centroid map, mutated by one writer at a time.

    Voxels are stored as three parallel arrays (packed key, coordinate
    sum, count) kept sorted by key, so inserting a scan is a vectorized
    merge rather than per-point dict updates.
    """

    def __init__(self, voxel_size: float = 0.05):
        if voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        self.voxel_size = float(voxel_size)
        self._keys = np.empty(0, dtype=np.int64)
        self._sums = np.empty((0, 3))
        self._counts = np.empty(0, dtype=np.int64)

    def __len__(self) -> int:
        return len(self._keys)

    def points(self) -> np.ndarray:
        """Representative point (centroid) per occupied voxel, key order."""
        if len(self._keys) == 0:
            return np.empty((0, 3))
        return self._sums / self._counts[:, None]

    def counts(self) -> np.ndarray:
        return self._counts.copy()

    def insert_points(self, points: np.ndarray) -> None:
        points = np.asarray(points, dtype=np.float64)
        if points.size == 0:
            return
        keys = _voxel_keys(points, self.voxel_size)
        all_keys = np.concatenate([self._keys, keys])
        merged, inverse = np.unique(all_keys, return_inverse=True)
        sums = np.empty((len(merged), 3))
        all_pts = np.concatenate([self._sums, points])
        for axis in range(3):
            sums[:, axis] = np.bincount(inverse, weights=all_pts[:, axis], minlength=len(merged))
        weights = np.concatenate([self._counts, np.ones(len(points), dtype=np.int64)])
        counts = np.bincount(inverse, weights=weights, minlength=len(merged)).astype(np.int64)
        self._keys = merged
        self._sums = sums
        self._counts = counts


def insert_scan(
    gmap: GlobalMap,
    scan: Scan,
    mount: RigidTransform3 | None = None,
    icp: IcpParams | None = None,
) -> tuple[RigidTransform3, IcpResult | str]:
    """Register a scan against the map and merge it in.

    The seed pose gives the initial transform. When the map holds enough
    nearby structure the transform is refined by ICP; otherwise the scan
    goes in on the seed alone and the result is the string "seeded-only".
    Returns (refined sensor-to-world transform, registration result).
    """
    if len(scan.cloud) == 0:
        raise ValueError("cannot insert an empty scan")
    params = icp or IcpParams()
    initial = pose2_to_transform3(scan.seed_pose, mount)
    down = voxel_downsample(scan.cloud, gmap.voxel_size)

    result: IcpResult | str = "seeded-only"
    refined = initial
    if len(gmap) >= params.min_correspondences:
        seeded = initial.apply(down.points)
        # register against only the map points near the seeded scan; the
        # margin covers any movement ICP itself can introduce
        map_points = gmap.points()
        lo = seeded.min(axis=0) - 2.0 * params.max_correspondence_m
        hi = seeded.max(axis=0) + 2.0 * params.max_correspondence_m
        local = map_points[np.all((map_points >= lo) & (map_points <= hi), axis=1)]
        if len(local) >= params.min_correspondences:
            tree = cKDTree(local)
            dist, _ = tree.query(seeded, distance_upper_bound=params.max_correspondence_m, workers=-1)
            if int(np.isfinite(dist).sum()) >= params.min_correspondences:
                try:
                    result = icp_register(
                        down, PointCloud(local), initial, params, target_tree=tree
                    )
                    refined = result.transform
                except CorrespondenceError:
                    # mid-run starvation falls back to the seed rather than failing the insert
                    result = "seeded-only"
                    refined = initial

    gmap.insert_points(refined.apply(down.points))
    return refined, result


@dataclass(frozen=True)
class MapErrorStats:
    mean_abs_m: float
    p95_abs_m: float
    outlier_fraction: float


def map_error(gmap: GlobalMap, world) -> MapErrorStats:
    """Distance statistics from map points to the nearest world surface.

    Outliers are points farther than 3 voxel sizes from every surface.
    `world` is a simulation World (floor rectangle at z = 0 plus boxes).
    """
    if len(gmap) == 0:
        raise ValueError("map is empty")
    pts = gmap.points()
    dists = world.surface_distance(pts)
    threshold = 3.0 * gmap.voxel_size
    return MapErrorStats(
        mean_abs_m=float(np.mean(dists)),
        p95_abs_m=float(np.percentile(dists, 95)),
        outlier_fraction=float(np.mean(dists > threshold)),
    )
