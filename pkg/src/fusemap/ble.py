"""BLE beacon ranging: log-distance path-loss model, observation types and
a brute-force grid trilateration oracle.

RSSI follows the log-distance model rssi = p0 - 10 n log10(d / d0) with
log-normal shadowing (Gaussian in dBm). Distances are 3D between the
receiver point (x, y, receiver_height) and the beacon position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, wrap_angle

# Below this range the log model blows up; expected_rssi clamps instead.
D_MIN = 0.1


@dataclass(frozen=True)
class PathLossParams:
    """Log-distance path-loss model parameters."""

    p0_dbm: float = -59.0
    n: float = 2.0
    d0: float = 1.0
    sigma_sh: float = 2.0

    def __post_init__(self) -> None:
        if self.n <= 0 or self.d0 <= 0:
            raise ValueError("path-loss exponent and reference distance must be positive")
        if self.sigma_sh < 0:
            raise ValueError("shadowing sigma must be nonnegative")


@dataclass(frozen=True)
class Beacon:
    id: str
    position: np.ndarray
    path_loss: PathLossParams = field(default_factory=PathLossParams)

    def __post_init__(self) -> None:
        p = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(p)):
            raise ValueError("beacon position must be finite")
        p.setflags(write=False)
        object.__setattr__(self, "position", p)


@dataclass(frozen=True)
class RssiObservation:
    beacon_id: str
    rssi: float
    timestamp: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rssi) and math.isfinite(self.timestamp)):
            raise ValueError("rssi and timestamp must be finite")


@dataclass(frozen=True)
class BearingObservation:
    """Bearing to a beacon in the robot frame, wrapped to (-pi, pi]."""

    beacon_id: str
    bearing: float
    timestamp: float
    sigma: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")
        if self.sigma <= 0:
            raise ValueError("bearing sigma must be positive")
        object.__setattr__(self, "bearing", wrap_angle(self.bearing))


@dataclass(frozen=True)
class OdometryDelta:
    """Rot-trans-rot odometry increment between consecutive poses."""

    d_rot1: float
    d_trans: float
    d_rot2: float
    timestamp: float

    def __post_init__(self) -> None:
        if not all(
            math.isfinite(v)
            for v in (self.d_rot1, self.d_trans, self.d_rot2, self.timestamp)
        ):
            raise ValueError("odometry delta entries must be finite")
        object.__setattr__(self, "d_rot1", wrap_angle(self.d_rot1))
        object.__setattr__(self, "d_rot2", wrap_angle(self.d_rot2))


def rssi_to_distance(rssi: float, pl: PathLossParams) -> float:
    """Invert the path-loss model: d = d0 * 10^((p0 - rssi) / (10 n))."""
    if not math.isfinite(rssi):
        raise ValueError("rssi must be finite")
    return pl.d0 * 10.0 ** ((pl.p0_dbm - rssi) / (10.0 * pl.n))


def expected_rssi(pose: Pose2, beacon: Beacon, receiver_height: float = 0.3) -> float:
    """Noise-free RSSI at the receiver for the given pose (measurement model).

    Distances below D_MIN are clamped to D_MIN to keep the log finite when
    the robot passes directly under a beacon.
    """
    bx, by, bz = beacon.position
    d = math.sqrt((pose.x - bx) ** 2 + (pose.y - by) ** 2 + (receiver_height - bz) ** 2)
    d = max(d, D_MIN)
    pl = beacon.path_loss
    return pl.p0_dbm - 10.0 * pl.n * math.log10(d / pl.d0)


def _expected_rssi_grid(
    xs: np.ndarray, ys: np.ndarray, beacon: Beacon, receiver_height: float
) -> np.ndarray:
    bx, by, bz = beacon.position
    d = np.sqrt((xs - bx) ** 2 + (ys - by) ** 2 + (receiver_height - bz) ** 2)
    d = np.maximum(d, D_MIN)
    pl = beacon.path_loss
    return pl.p0_dbm - 10.0 * pl.n * np.log10(d / pl.d0)


def trilaterate_grid(
    observations: list[RssiObservation],
    beacons: dict[str, Beacon] | list[Beacon],
    receiver_height: float,
    bounds: tuple[float, float, float, float],
    cell_m: float,
) -> tuple[np.ndarray, float]:
    """Exhaustive grid search minimizing the sum of squared RSSI residuals.

    Evaluates every cell center of an (x, y) grid over bounds
    (xmin, xmax, ymin, ymax) at resolution cell_m and returns the argmin
    center and its residual. Needs observations of at least 3 distinct
    beacons. This is the brute-force reference the EKF is tested against.
    """
    if isinstance(beacons, dict):
        beacon_map = beacons
    else:
        beacon_map = {b.id: b for b in beacons}
    distinct = {o.beacon_id for o in observations}
    if len(distinct) < 3:
        raise ValueError(f"need observations of >= 3 distinct beacons, got {len(distinct)}")
    missing = distinct - set(beacon_map)
    if missing:
        raise ValueError(f"unknown beacon ids: {sorted(missing)}")
    if cell_m <= 0:
        raise ValueError("cell_m must be positive")
    xmin, xmax, ymin, ymax = bounds
    if xmax <= xmin or ymax <= ymin:
        raise ValueError("empty grid bounds")

    nx = max(1, int(math.ceil((xmax - xmin) / cell_m)))
    ny = max(1, int(math.ceil((ymax - ymin) / cell_m)))
    xs = xmin + (np.arange(nx) + 0.5) * cell_m
    ys = ymin + (np.arange(ny) + 0.5) * cell_m
    gx, gy = np.meshgrid(xs, ys, indexing="ij")

    residual = np.zeros_like(gx)
    for obs in observations:
        expected = _expected_rssi_grid(gx, gy, beacon_map[obs.beacon_id], receiver_height)
        residual += (obs.rssi - expected) ** 2

    flat = int(np.argmin(residual))
    i, j = np.unravel_index(flat, residual.shape)
    return np.array([gx[i, j], gy[i, j]]), float(residual[i, j])
