"""Extended Kalman filter fusing odometry with BLE RSSI and bearing
observations.

State is the planar pose (x, y, theta) with a 3x3 covariance. Prediction
uses the rot-trans-rot odometry model; RSSI updates are performed in the
dBm domain, where log-normal shadowing is Gaussian. Both update types are
chi-square gated on the normalized innovation and apply the Joseph-form
covariance update followed by explicit symmetrization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ble import (
    Beacon,
    BearingObservation,
    OdometryDelta,
    RssiObservation,
    expected_rssi,
)
from .geometry import Pose2, check_covariance, compose, symmetrize, wrap_angle

# Default initial covariance for fusion runs; shared by the simulator and
# the offline replay so both start from the same filter state.
DEFAULT_INITIAL_COV = np.diag([0.25, 0.25, 0.1])

_LOG10_SCALE = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class EkfNoise:
    """Odometry noise coefficients (alpha model) and the innovation gate.

    alpha1: rotation noise from rotation; alpha2: rotation noise from
    translation; alpha3: translation noise from translation; alpha4:
    translation noise from rotation. gate_chi2 is the 1-dof chi-square
    threshold on innovation^2 / S (6.63 = 99%).
    """

    alpha1: float = 0.05
    alpha2: float = 0.01
    alpha3: float = 0.05
    alpha4: float = 0.01
    gate_chi2: float = 6.63

    def __post_init__(self) -> None:
        if min(self.alpha1, self.alpha2, self.alpha3, self.alpha4) < 0:
            raise ValueError("alphas must be nonnegative")
        if self.gate_chi2 <= 0:
            raise ValueError("gate_chi2 must be positive")


@dataclass(frozen=True)
class EkfState:
    """Filter state: mean pose, covariance (m^2, m^2, rad^2) and last stamp."""

    mean: Pose2
    cov: np.ndarray
    last_update: float = 0.0

    def __post_init__(self) -> None:
        c = check_covariance(self.cov, sym_tol=1e-9, eig_tol=-1e-9)
        if c.shape != (3, 3):
            raise ValueError("EKF covariance must be 3x3")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "cov", c)


def ekf_predict(state: EkfState, odo: OdometryDelta, noise: EkfNoise) -> EkfState:
    """Propagate mean and covariance through the odometry motion model."""
    if odo.timestamp < state.last_update:
        raise ValueError(
            f"odometry timestamp {odo.timestamp} precedes state time {state.last_update}"
        )
    th = state.mean.theta
    r1, dt, r2 = odo.d_rot1, odo.d_trans, odo.d_rot2
    heading = th + r1
    c, s = math.cos(heading), math.sin(heading)

    mean = Pose2(state.mean.x + dt * c, state.mean.y + dt * s, heading + r2)

    g = np.array([[1.0, 0.0, -dt * s], [0.0, 1.0, dt * c], [0.0, 0.0, 1.0]])
    v = np.array([[-dt * s, c, 0.0], [dt * c, s, 0.0], [1.0, 0.0, 1.0]])
    m = np.diag(
        [
            noise.alpha1 * r1 * r1 + noise.alpha2 * dt * dt,
            noise.alpha3 * dt * dt + noise.alpha4 * (r1 * r1 + r2 * r2),
            noise.alpha1 * r2 * r2 + noise.alpha2 * dt * dt,
        ]
    )
    cov = symmetrize(g @ state.cov @ g.T + v @ m @ v.T)
    return EkfState(mean, cov, odo.timestamp)


def _apply_update(
    state: EkfState,
    innovation: float,
    h_row: np.ndarray,
    meas_var: float,
    gate_chi2: float,
    timestamp: float,
) -> tuple[EkfState, bool]:
    """Scalar-measurement EKF update with gating and Joseph-form covariance."""
    p = state.cov
    s = float(h_row @ p @ h_row) + meas_var
    if s <= 0:
        return state, True
    if innovation * innovation / s > gate_chi2:
        return state, True

    k = (p @ h_row) / s
    delta = k * innovation
    mean = Pose2(
        state.mean.x + delta[0],
        state.mean.y + delta[1],
        state.mean.theta + delta[2],
    )
    ikh = np.eye(3) - np.outer(k, h_row)
    cov = symmetrize(ikh @ p @ ikh.T + meas_var * np.outer(k, k))
    return EkfState(mean, cov, timestamp), False


def ekf_update_rssi(
    state: EkfState,
    obs: RssiObservation,
    beacon: Beacon,
    receiver_height: float = 0.3,
    gate_chi2: float = 6.63,
) -> tuple[EkfState, bool]:
    """RSSI measurement update in the dBm domain.

    Measurement variance is the beacon's shadowing sigma squared. Returns
    (state, gated); a gated observation leaves the state unchanged.
    """
    if obs.beacon_id != beacon.id:
        raise ValueError(f"observation is for beacon {obs.beacon_id!r}, not {beacon.id!r}")
    bx, by, bz = beacon.position
    dx = state.mean.x - bx
    dy = state.mean.y - by
    dz = receiver_height - bz
    d_sq = max(dx * dx + dy * dy + dz * dz, 0.1 * 0.1)

    predicted = expected_rssi(state.mean, beacon, receiver_height)
    innovation = obs.rssi - predicted
    scale = -_LOG10_SCALE * beacon.path_loss.n / d_sq
    h_row = np.array([scale * dx, scale * dy, 0.0])
    meas_var = beacon.path_loss.sigma_sh**2
    return _apply_update(state, innovation, h_row, meas_var, gate_chi2, obs.timestamp)


def ekf_update_bearing(
    state: EkfState,
    obs: BearingObservation,
    beacon: Beacon,
    gate_chi2: float = 6.63,
) -> tuple[EkfState, bool]:
    """Bearing measurement update; the innovation is wrapped before use.

    Skipped (gated) when the robot sits on the beacon's horizontal
    position, where the bearing is undefined.
    """
    if obs.beacon_id != beacon.id:
        raise ValueError(f"observation is for beacon {obs.beacon_id!r}, not {beacon.id!r}")
    qx = beacon.position[0] - state.mean.x
    qy = beacon.position[1] - state.mean.y
    q_sq = qx * qx + qy * qy
    if q_sq < 1e-12:
        return state, True

    predicted = wrap_angle(math.atan2(qy, qx) - state.mean.theta)
    innovation = wrap_angle(obs.bearing - predicted)
    h_row = np.array([qy / q_sq, -qx / q_sq, -1.0])
    # Pose2 wraps theta on construction, so the corrected heading stays in range.
    return _apply_update(state, innovation, h_row, obs.sigma**2, gate_chi2, obs.timestamp)


def odometry_delta_pose(odo: OdometryDelta) -> Pose2:
    """Local pose increment equivalent to a rot-trans-rot odometry delta."""
    return Pose2(
        odo.d_trans * math.cos(odo.d_rot1),
        odo.d_trans * math.sin(odo.d_rot1),
        odo.d_rot1 + odo.d_rot2,
    )


def integrate_odometry(initial: Pose2, deltas: list[OdometryDelta]) -> list[tuple[float, Pose2]]:
    """Dead-reckoning: fold odometry deltas from an initial pose."""
    pose = initial
    out = []
    for odo in deltas:
        pose = compose(pose, odometry_delta_pose(odo))
        out.append((odo.timestamp, pose))
    return out


@dataclass
class FusionRow:
    """One trajectory sample, emitted after each odometry event."""

    timestamp: float
    estimate: Pose2
    cov_trace: float
    dead_reckoning: Pose2


class FusionFilter:
    """Applies a time-ordered observation stream to the EKF.

    Tracks a dead-reckoning pose (odometry only) alongside the fused
    estimate and appends one trajectory row per odometry event. The same
    class drives both in-simulation fusion and offline log replay, which
    is what makes the two bit-identical on identical inputs.
    """

    def __init__(
        self,
        initial: Pose2,
        beacons: dict[str, Beacon] | list[Beacon],
        receiver_height: float = 0.3,
        noise: EkfNoise | None = None,
        initial_cov: np.ndarray | None = None,
        start_time: float = 0.0,
    ):
        cov = DEFAULT_INITIAL_COV if initial_cov is None else initial_cov
        self.state = EkfState(initial, np.array(cov, dtype=np.float64), start_time)
        self.noise = noise or EkfNoise()
        self.receiver_height = receiver_height
        if isinstance(beacons, dict):
            self.beacons = dict(beacons)
        else:
            self.beacons = {b.id: b for b in beacons}
        self.dead_reckoning = initial
        self.rows: list[FusionRow] = []
        self.gated_rssi = 0
        self.gated_bearing = 0
        self._last_time = start_time

    def _beacon(self, beacon_id: str) -> Beacon:
        try:
            return self.beacons[beacon_id]
        except KeyError:
            raise ValueError(f"unknown beacon id {beacon_id!r}") from None

    def process(self, obs: OdometryDelta | RssiObservation | BearingObservation) -> None:
        if obs.timestamp < self._last_time:
            raise ValueError(
                f"observation at t={obs.timestamp} arrived after t={self._last_time}"
            )
        self._last_time = obs.timestamp
        if isinstance(obs, OdometryDelta):
            self.state = ekf_predict(self.state, obs, self.noise)
            self.dead_reckoning = compose(self.dead_reckoning, odometry_delta_pose(obs))
            self.rows.append(
                FusionRow(
                    obs.timestamp,
                    self.state.mean,
                    float(np.trace(self.state.cov)),
                    self.dead_reckoning,
                )
            )
        elif isinstance(obs, RssiObservation):
            self.state, gated = ekf_update_rssi(
                self.state,
                obs,
                self._beacon(obs.beacon_id),
                self.receiver_height,
                self.noise.gate_chi2,
            )
            self.gated_rssi += int(gated)
        elif isinstance(obs, BearingObservation):
            self.state, gated = ekf_update_bearing(
                self.state, obs, self._beacon(obs.beacon_id), self.noise.gate_chi2
            )
            self.gated_bearing += int(gated)
        else:
            raise TypeError(f"unsupported observation type {type(obs).__name__}")

    def process_all(self, stream) -> None:
        # Canonical order: timestamp, then odometry before beacon updates,
        # then beacon id. A stable sort leaves already-canonical logs as-is.
        def key(obs):
            if isinstance(obs, OdometryDelta):
                return (obs.timestamp, 0, "")
            kind = 1 if isinstance(obs, RssiObservation) else 2
            return (obs.timestamp, kind, obs.beacon_id)

        for obs in sorted(stream, key=key):
            self.process(obs)
