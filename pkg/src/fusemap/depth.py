"""Depth-map processing: back-projection to point clouds, floor-plane
fitting and heightmap generation.

Depth maps use the convention value 0 / valid False for holes. Point
clouds produced by :func:`back_project` are in the camera optical frame
(x right, y down, z forward) and carry per-point source-row fractions so
the floor fitter can restrict itself to the bottom of the image.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import CameraIntrinsics


class FloorFitError(RuntimeError):
    """Raised when RANSAC cannot find a floor plane with enough inliers."""


@dataclass(frozen=True)
class DepthMap:
    """Per-pixel depth in meters with a validity mask; arrays are (height, width)."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        m = np.asarray(self.valid, dtype=bool)
        if v.ndim != 2 or v.shape != m.shape:
            raise ValueError(f"values {v.shape} and valid {m.shape} must be equal 2D shapes")
        if v[m].size and not (np.all(np.isfinite(v[m])) and np.all(v[m] > 0)):
            raise ValueError("valid depth values must be finite and positive")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", m)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ColorImage:
    """8-bit RGB image, shape (height, width, 3)."""

    rgb: np.ndarray

    def __post_init__(self) -> None:
        a = np.asarray(self.rgb, dtype=np.uint8)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError(f"rgb must be (h, w, 3), got {a.shape}")
        object.__setattr__(self, "rgb", a)

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


@dataclass(frozen=True)
class PointCloud:
    """3D points in meters, with optional per-point colors and source-row fractions.

    `row_frac` is each point's source pixel row divided by (height - 1);
    it is populated by back_project and lets the floor fitter select
    bottom-of-image candidates without keeping the full image around.
    """

    points: np.ndarray
    colors: np.ndarray | None = None
    row_frac: np.ndarray | None = None

    def __post_init__(self) -> None:
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point coordinates must be finite")
        object.__setattr__(self, "points", p)
        if self.colors is not None:
            c = np.asarray(self.colors, dtype=np.uint8).reshape(-1, 3)
            if len(c) != len(p):
                raise ValueError(f"{len(c)} colors for {len(p)} points")
            object.__setattr__(self, "colors", c)
        if self.row_frac is not None:
            r = np.asarray(self.row_frac, dtype=np.float64).reshape(-1)
            if len(r) != len(p):
                raise ValueError(f"{len(r)} row fractions for {len(p)} points")
            object.__setattr__(self, "row_frac", r)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Plane:
    """Plane {p : normal . p + offset = 0} with unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("plane normal must be unit length")
        n.setflags(write=False)
        object.__setattr__(self, "normal", n)
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.normal + self.offset

    def flipped(self) -> Plane:
        return Plane(-self.normal, -self.offset)


@dataclass(frozen=True)
class HeightMap:
    """Per-pixel height above the floor plane, meters; negative values kept."""

    heights: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        h = np.asarray(self.heights, dtype=np.float64)
        m = np.asarray(self.valid, dtype=bool)
        if h.ndim != 2 or h.shape != m.shape:
            raise ValueError("heights and valid must be equal 2D shapes")
        object.__setattr__(self, "heights", h)
        object.__setattr__(self, "valid", m)

    @property
    def height(self) -> int:
        return self.heights.shape[0]

    @property
    def width(self) -> int:
        return self.heights.shape[1]


@dataclass(frozen=True)
class RansacParams:
    """Floor-plane RANSAC settings; bottom_fraction selects floor candidates."""

    iterations: int = 200
    inlier_threshold_m: float = 0.02
    bottom_fraction: float = 1.0 / 3.0
    min_inliers: int = 30

    def __post_init__(self) -> None:
        if self.iterations <= 0 or self.inlier_threshold_m <= 0:
            raise ValueError("iterations and inlier threshold must be positive")
        if not 0 < self.bottom_fraction <= 1:
            raise ValueError("bottom_fraction must be in (0, 1]")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be at least 3")


def back_project(
    depth: DepthMap,
    intr: CameraIntrinsics,
    color: ColorImage | None = None,
) -> PointCloud:
    """Back-project each valid pixel through the pinhole model.

    Pixel (u, v) with depth z maps to ((u - cx) z / fx, (v - cy) z / fy, z)
    in the camera frame. Points come out in row-major pixel order; colors
    are copied pixel-wise when an aligned color image is given.
    """
    if (depth.height, depth.width) != (intr.height, intr.width):
        raise ValueError(
            f"depth {depth.width}x{depth.height} does not match "
            f"intrinsics {intr.width}x{intr.height}"
        )
    if color is not None and (color.height, color.width) != (depth.height, depth.width):
        raise ValueError("color image dimensions do not match depth map")
    if depth.valid.any() and np.max(depth.values[depth.valid]) > intr.max_depth * (1 + 1e-12):
        raise ValueError("valid depth exceeds intrinsics max_depth")

    vs, us = np.nonzero(depth.valid)
    z = depth.values[vs, us]
    x = (us - intr.cx) * z / intr.fx
    y = (vs - intr.cy) * z / intr.fy
    points = np.column_stack([x, y, z])
    colors = color.rgb[vs, us] if color is not None else None
    denom = max(depth.height - 1, 1)
    return PointCloud(points, colors=colors, row_frac=vs / denom)


def project(points: np.ndarray, intr: CameraIntrinsics):
    """Project camera-frame points to pixel coordinates.

    Accepts one (3,) point or an (N, 3) array. Returns (u, v, z, in_frame)
    where in_frame flags pixel coordinates inside [0, width-1] x [0, height-1].
    Any point with z <= 0 is an error.
    """
    pts = np.asarray(points, dtype=np.float64)
    single = pts.ndim == 1
    pts = pts.reshape(-1, 3)
    z = pts[:, 2]
    if np.any(z <= 0):
        raise ValueError("cannot project points with z <= 0")
    u = intr.fx * pts[:, 0] / z + intr.cx
    v = intr.fy * pts[:, 1] / z + intr.cy
    in_frame = (u >= 0) & (u <= intr.width - 1) & (v >= 0) & (v <= intr.height - 1)
    if single:
        return float(u[0]), float(v[0]), float(z[0]), bool(in_frame[0])
    return u, v, z.copy(), in_frame


def _plane_from_triple(p0: np.ndarray, p1: np.ndarray, p2: np.ndarray):
    n = np.cross(p1 - p0, p2 - p0)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        return None
    n = n / norm
    return n, -float(n @ p0)


def _least_squares_plane(pts: np.ndarray):
    centroid = pts.mean(axis=0)
    # smallest right singular vector of the centered points is the normal
    _, _, vt = np.linalg.svd(pts - centroid, full_matrices=False)
    n = vt[-1]
    n = n / np.linalg.norm(n)
    return n, -float(n @ centroid)


def fit_floor_plane(
    cloud: PointCloud,
    params: RansacParams | None = None,
    camera_center: np.ndarray | tuple = (0.0, 0.0, 0.0),
    down: np.ndarray | tuple = (0.0, 1.0, 0.0),
    rng: np.random.Generator | None = None,
) -> Plane:
    """RANSAC floor fit restricted to the bottom of the image.

    Candidates are the points whose source pixel row lies in the bottom
    `bottom_fraction` of the image; for clouds without row provenance the
    candidates are the bottom fraction along `down` (default +y, the
    camera-frame down axis; pass (0, 0, -1) for world-frame z-up clouds).
    Triples are sampled from the candidates, inliers counted among the
    candidates, and the winner refined by least squares over its inliers.
    The returned normal gives `camera_center` nonnegative signed distance.

    Raises FloorFitError when the best model has fewer than min_inliers.
    """
    params = params or RansacParams()
    rng = rng if rng is not None else np.random.default_rng(0)
    pts = cloud.points
    if len(pts) < 3:
        raise ValueError("need at least 3 points to fit a plane")

    if cloud.row_frac is not None:
        cand_mask = cloud.row_frac >= 1.0 - params.bottom_fraction
    else:
        heights_along_down = pts @ np.asarray(down, dtype=np.float64)
        cutoff = np.quantile(heights_along_down, 1.0 - params.bottom_fraction)
        cand_mask = heights_along_down >= cutoff
    cand = pts[cand_mask]
    if len(cand) < 3:
        raise ValueError("fewer than 3 floor candidates")

    best_count = 0
    best_inliers = None
    for _ in range(params.iterations):
        i, j, k = rng.choice(len(cand), size=3, replace=False)
        model = _plane_from_triple(cand[i], cand[j], cand[k])
        if model is None:
            continue
        n, off = model
        dist = np.abs(cand @ n + off)
        inliers = dist <= params.inlier_threshold_m
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers

    if best_count < params.min_inliers:
        raise FloorFitError(
            f"no floor found: best model has {best_count} inliers "
            f"(need {params.min_inliers})"
        )

    n, off = _least_squares_plane(cand[best_inliers])
    plane = Plane(n, off)
    if plane.signed_distance(np.asarray(camera_center, dtype=np.float64)) < 0:
        plane = plane.flipped()
    return plane


def height_map(depth: DepthMap, intr: CameraIntrinsics, floor: Plane) -> HeightMap:
    """Signed distance of each valid pixel's back-projected point to the floor."""
    cloud = back_project(depth, intr)
    heights = np.zeros((depth.height, depth.width), dtype=np.float64)
    heights[depth.valid] = floor.signed_distance(cloud.points)
    return HeightMap(heights, depth.valid.copy())
