"""Closed-loop scenario simulation.

A scenario runs one logical timeline: ground truth follows a waypoint
trajectory, sensors emit at their configured rates, and every event is
processed in timestamp order (ties broken odometry, rssi, bearing,
depth). Odometry and beacon observations drive the EKF; depth frames are
back-projected and registered into the global map seeded by the current
estimate.

Each sensor channel draws from its own generator derived from the master
seed, so changing one channel's rate leaves the others' noise sequences
alone. Every emitted value is quantized to 9 significant digits at the
moment of emission; the in-loop filter consumes the quantized values, so
replaying a written observation log reproduces the estimates exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .ble import (
    Beacon,
    BearingObservation,
    OdometryDelta,
    PathLossParams,
    RssiObservation,
    expected_rssi,
)
from .depth import CameraIntrinsics, DepthMap, PointCloud, back_project
from .ekf import EkfNoise, FusionFilter, FusionRow
from .geometry import Pose2, RigidTransform3, pose2_to_transform3, transform_to_pose2, wrap_angle
from .mapping import GlobalMap, IcpParams, IcpResult, Scan, insert_scan, map_error
from .world import Box, World, camera_mount, raycast_depth

# Stream identifiers for per-channel RNG derivation and event ordering.
_CH_WORLD, _CH_ODOM, _CH_RSSI, _CH_BEARING, _CH_DEPTH = range(5)

# Scenarios start the filter at the true dock pose, so the prior is tight; a
# loose prior would let the first beacon fixes swing the heading before the
# first scan anchors the map. Offline replays must start from the same prior
# to reproduce in-loop estimates exactly.
SCENARIO_INITIAL_COV = np.diag([2.5e-3, 2.5e-3, 1.2e-3])


def quantize9(x: float) -> float:
    """Round to 9 significant digits, the precision of all emitted values.

    Values pass through text files formatted with %.9g; quantizing at
    emission makes the in-memory and round-tripped values identical.
    """
    return float(f"{x:.9g}")


@dataclass(frozen=True)
class TrajectorySpec:
    """Waypoint route driven at constant speed with bounded turn rate."""

    waypoints: tuple[tuple[float, float], ...]
    speed: float = 1.0
    turn_rate: float = 1.5

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "waypoints", tuple((float(x), float(y)) for x, y in self.waypoints)
        )
        if len(self.waypoints) < 2:
            raise ValueError("trajectory needs at least 2 waypoints")
        if self.speed <= 0 or self.turn_rate <= 0:
            raise ValueError("speed and turn_rate must be positive")


@dataclass(frozen=True)
class Rates:
    depth_hz: float = 9.0
    ble_hz: float = 10.0
    odom_hz: float = 20.0

    def __post_init__(self) -> None:
        # odometry drives the clock; the other streams may be switched off
        if self.odom_hz <= 0:
            raise ValueError("odom_hz must be positive")
        if self.depth_hz < 0 or self.ble_hz < 0:
            raise ValueError("rates must be nonnegative")


@dataclass(frozen=True)
class NoiseConfig:
    """Forward noise applied by the simulator; alphas also parametrize the EKF."""

    alpha1: float = 0.05
    alpha2: float = 0.01
    alpha3: float = 0.05
    alpha4: float = 0.01
    depth_sigma_rel: float = 0.01
    depth_quantize_mm: bool = True
    # beacon-relative orientation stream; 0 disables it
    bearing_sigma: float = 0.15
    sigma_sh: float = 2.0

    def __post_init__(self) -> None:
        if min(self.alpha1, self.alpha2, self.alpha3, self.alpha4) < 0:
            raise ValueError("alphas must be nonnegative")
        if self.depth_sigma_rel < 0 or self.bearing_sigma < 0 or self.sigma_sh < 0:
            raise ValueError("noise sigmas must be nonnegative")

    def ekf_noise(self) -> EkfNoise:
        return EkfNoise(self.alpha1, self.alpha2, self.alpha3, self.alpha4)


@dataclass(frozen=True)
class CameraConfig:
    width: int = 160
    height: int = 120
    fx: float = 130.0
    fy: float = 130.0
    cx: float = 79.5
    cy: float = 59.5
    max_depth: float = 8.0
    height_m: float = 0.5
    forward_m: float = 0.0

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.max_depth
        )

    def mount(self) -> RigidTransform3:
        return camera_mount(self.height_m, self.forward_m)


@dataclass(frozen=True)
class WorldConfig:
    """Recipe for the synthetic store: floor size, shelf boxes, beacon layout."""

    floor_x: float = 20.0
    floor_y: float = 10.0
    boxes: tuple[tuple[float, float, float, float, float, float], ...] = (
        (4.0, 3.0, 0.0, 16.0, 4.0, 1.8),
        (4.0, 6.0, 0.0, 16.0, 7.0, 1.8),
    )
    n_beacons: int = 20
    beacon_height: float = 2.5
    p0_dbm: float = -59.0
    path_loss_n: float = 2.0
    d0: float = 1.0

    def __post_init__(self) -> None:
        if self.floor_x <= 0 or self.floor_y <= 0:
            raise ValueError("floor extent must be positive")
        if self.n_beacons < 0:
            raise ValueError("n_beacons must be nonnegative")
        object.__setattr__(self, "boxes", tuple(tuple(map(float, b)) for b in self.boxes))
        for b in self.boxes:
            if len(b) != 6:
                raise ValueError("each box is (x0, y0, z0, x1, y1, z1)")

    def build(self, rng: np.random.Generator, sigma_sh: float = 2.0) -> World:
        """Materialize the world; beacon positions come from `rng` and are
        quantized so they survive a CSV round trip unchanged."""
        boxes = tuple(
            Box(np.array(b[:3]), np.array(b[3:])) for b in self.boxes
        )
        pl = PathLossParams(self.p0_dbm, self.path_loss_n, self.d0, sigma_sh)
        beacons = []
        for i in range(self.n_beacons):
            x = quantize9(rng.uniform(0.0, self.floor_x))
            y = quantize9(rng.uniform(0.0, self.floor_y))
            beacons.append(Beacon(f"b{i:02d}", np.array([x, y, self.beacon_height]), pl))
        return World(
            floor_min=(0.0, 0.0),
            floor_max=(self.floor_x, self.floor_y),
            boxes=boxes,
            beacons=tuple(beacons),
        )


def default_trajectory(loops: int = 2) -> TrajectorySpec:
    """Aisle loop through the default store, long enough for a 120 s run."""
    lap = (
        (2.0, 1.5),
        (18.0, 1.5),
        (18.0, 5.0),
        (2.0, 5.0),
        (2.0, 8.5),
        (18.0, 8.5),
        (18.0, 5.0),
        (2.0, 5.0),
    )
    path = [(2.0, 1.5)] if loops < 1 else []
    for _ in range(max(loops, 1)):
        path.extend(lap)
    path.append((2.0, 1.5))
    return TrajectorySpec(tuple(path))


@dataclass(frozen=True)
class ScenarioConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    trajectory: TrajectorySpec = field(default_factory=default_trajectory)
    camera: CameraConfig = field(default_factory=CameraConfig)
    rates: Rates = field(default_factory=Rates)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    receiver_height: float = 0.3
    voxel_size: float = 0.05
    # scan points beyond this camera-frame depth are left out of the map;
    # far floor pixels amplify heading error without adding structure
    map_max_range: float = 4.5
    map_seed: str = "ekf"
    keep_depth: bool = False
    seed: int = 0
    duration: float = 120.0

    def __post_init__(self) -> None:
        if self.duration < 0:
            raise ValueError("duration must be nonnegative")
        if self.map_seed not in ("ekf", "truth"):
            raise ValueError('map_seed must be "ekf" or "truth"')
        if self.voxel_size <= 0 or self.map_max_range <= 0:
            raise ValueError("voxel_size and map_max_range must be positive")


@dataclass(frozen=True)
class IcpRow:
    """Refined sensor pose recorded per inserted scan."""

    timestamp: float
    pose: Pose2
    converged: bool
    rmse: float
    seeded_only: bool


@dataclass
class SimLog:
    """Everything a scenario run produced."""

    config: ScenarioConfig
    world: World
    initial_pose: Pose2
    truth: list[tuple[float, Pose2]]
    observations: list[OdometryDelta | RssiObservation | BearingObservation]
    rows: list[FusionRow]
    map: GlobalMap
    icp_rows: list[IcpRow]
    gated_rssi: int
    gated_bearing: int
    metrics: dict[str, float]
    depth_frames: list[tuple[float, DepthMap]]


def channel_rng(seed: int, channel: int) -> np.random.Generator:
    """Independent generator for one sensor channel of one scenario seed."""
    return np.random.default_rng(np.random.SeedSequence((seed, channel)))


def sample_trajectory(spec: TrajectorySpec, dt: float) -> list[tuple[float, Pose2]]:
    """Follow the waypoints at constant speed, turning at most turn_rate.

    Returns timestamped poses at uniform dt, starting at the first
    waypoint headed toward the second, ending when the last waypoint is
    reached (within half a step).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    wps = spec.waypoints
    total = 0.0
    for (ax, ay), (bx, by) in zip(wps, wps[1:]):
        seg = math.hypot(bx - ax, by - ay)
        if seg < 1e-9:
            raise ValueError("consecutive waypoints coincide")
        total += seg

    x, y = wps[0]
    heading = math.atan2(wps[1][1] - y, wps[1][0] - x)
    poses = [Pose2(x, y, heading)]
    step = spec.speed * dt
    target = 1
    # generous cap so an unreachable waypoint cannot loop forever
    max_steps = int(4.0 * total / step) + 16
    for _ in range(max_steps):
        tx, ty = wps[target]
        desired = math.atan2(ty - y, tx - x)
        turn = wrap_angle(desired - heading)
        limit = spec.turn_rate * dt
        heading = wrap_angle(heading + min(limit, max(-limit, turn)))
        x += step * math.cos(heading)
        y += step * math.sin(heading)
        poses.append(Pose2(x, y, heading))
        if math.hypot(tx - x, ty - y) < step / 2.0:
            target += 1
            if target == len(wps):
                break
    return [(i * dt, p) for i, p in enumerate(poses)]


def simulate_odometry(
    prev: Pose2,
    curr: Pose2,
    noise: EkfNoise,
    rng: np.random.Generator,
    timestamp: float = 0.0,
) -> OdometryDelta:
    """Decompose the true motion into rot-trans-rot and perturb each part."""
    dx = curr.x - prev.x
    dy = curr.y - prev.y
    d_trans = math.hypot(dx, dy)
    if d_trans < 1e-12:
        d_rot1 = 0.0
    else:
        d_rot1 = wrap_angle(math.atan2(dy, dx) - prev.theta)
    d_rot2 = wrap_angle(curr.theta - prev.theta - d_rot1)

    g = rng.standard_normal(3)
    r1 = d_rot1 + g[0] * math.sqrt(
        noise.alpha1 * d_rot1**2 + noise.alpha2 * d_trans**2
    )
    tr = d_trans + g[1] * math.sqrt(
        noise.alpha3 * d_trans**2 + noise.alpha4 * (d_rot1**2 + d_rot2**2)
    )
    r2 = d_rot2 + g[2] * math.sqrt(
        noise.alpha1 * d_rot2**2 + noise.alpha2 * d_trans**2
    )
    return OdometryDelta(quantize9(r1), quantize9(tr), quantize9(r2), quantize9(timestamp))


def simulate_rssi(
    pose: Pose2,
    beacon: Beacon,
    receiver_height: float,
    rng: np.random.Generator,
    timestamp: float = 0.0,
) -> RssiObservation:
    """Forward path-loss model plus one log-normal shadowing draw."""
    rssi = expected_rssi(pose, beacon, receiver_height)
    rssi += beacon.path_loss.sigma_sh * rng.standard_normal()
    return RssiObservation(beacon.id, quantize9(rssi), quantize9(timestamp))


def simulate_bearing(
    pose: Pose2,
    beacon: Beacon,
    sigma: float,
    rng: np.random.Generator,
    timestamp: float = 0.0,
) -> BearingObservation:
    bearing = math.atan2(beacon.position[1] - pose.y, beacon.position[0] - pose.x) - pose.theta
    bearing += sigma * rng.standard_normal()
    return BearingObservation(
        beacon.id, quantize9(wrap_angle(bearing)), quantize9(timestamp), sigma
    )


def apply_depth_noise(
    depth: DepthMap,
    sigma_rel: float,
    quantize_mm: bool,
    rng: np.random.Generator,
    max_depth: float,
) -> DepthMap:
    """Multiplicative Gaussian noise plus optional millimeter rounding.

    Pixels pushed out of (0, max_depth] become invalid.
    """
    values = depth.values.copy()
    valid = depth.valid.copy()
    if sigma_rel > 0:
        g = rng.standard_normal(values.shape)
        values = np.where(valid, values * (1.0 + sigma_rel * g), values)
    if quantize_mm:
        values = np.where(valid, np.round(values * 1000.0) / 1000.0, values)
    valid &= (values > 0.0) & (values <= max_depth)
    return DepthMap(np.where(valid, values, 0.0), valid)


def pose_rmse(
    estimated: list[tuple[float, Pose2]], truth: list[tuple[float, Pose2]]
) -> dict[str, float]:
    """Position and heading error over timestamp-matched pose pairs."""
    by_time = {t: p for t, p in truth}
    dx2 = []
    dth2 = []
    for t, est in estimated:
        ref = by_time.get(t)
        if ref is None:
            continue
        dx2.append((est.x - ref.x) ** 2 + (est.y - ref.y) ** 2)
        dth2.append(wrap_angle(est.theta - ref.theta) ** 2)
    if not dx2:
        raise ValueError("no matching timestamps between estimate and truth")
    return {
        "rmse_xy_m": float(np.sqrt(np.mean(dx2))),
        "rmse_theta_rad": float(np.sqrt(np.mean(dth2))),
        "max_xy_m": float(np.sqrt(np.max(dx2))),
    }


def _interpolated_pose(poses: list[Pose2], t: float, dt: float) -> Pose2:
    """Truth pose at an off-grid time, piecewise linear between grid poses."""
    k = t / dt
    i0 = int(math.floor(k))
    if i0 >= len(poses) - 1:
        return poses[-1]
    if i0 < 0:
        return poses[0]
    frac = k - i0
    a, b = poses[i0], poses[i0 + 1]
    return Pose2(
        a.x + frac * (b.x - a.x),
        a.y + frac * (b.y - a.y),
        a.theta + frac * wrap_angle(b.theta - a.theta),
    )


def run_scenario(config: ScenarioConfig) -> SimLog:
    """Execute one scenario end to end; deterministic for a given config."""
    rng_world = channel_rng(config.seed, _CH_WORLD)
    rng_odom = channel_rng(config.seed, _CH_ODOM)
    rng_rssi = channel_rng(config.seed, _CH_RSSI)
    rng_bearing = channel_rng(config.seed, _CH_BEARING)
    rng_depth = channel_rng(config.seed, _CH_DEPTH)

    world = config.world.build(rng_world, config.noise.sigma_sh)
    intr = config.camera.intrinsics()
    mount = config.camera.mount()
    mount_inv = mount.inverse()
    # Correspondence radius scales with the map resolution; the looser library
    # default admits cross-surface matches that let rotation-poor scans drift.
    icp_params = IcpParams(
        max_correspondence_m=3.0 * config.voxel_size,
        convergence_eps=5e-4,
    )

    dt = 1.0 / config.rates.odom_hz
    n_odom = int(math.floor(config.duration * config.rates.odom_hz + 1e-9))
    sampled = [p for _, p in sample_trajectory(config.trajectory, dt)]
    poses = sampled[: n_odom + 1]
    while len(poses) < n_odom + 1:
        poses.append(poses[-1])
    truth = [(quantize9(k / config.rates.odom_hz), poses[k]) for k in range(n_odom + 1)]

    initial = Pose2(quantize9(poses[0].x), quantize9(poses[0].y), quantize9(poses[0].theta))
    filt = FusionFilter(
        initial,
        {b.id: b for b in world.beacons},
        config.receiver_height,
        config.noise.ekf_noise(),
        SCENARIO_INITIAL_COV,
    )

    events: list[tuple[float, int, int]] = []
    for k in range(1, n_odom + 1):
        events.append((quantize9(k / config.rates.odom_hz), _CH_ODOM, k))
    for k in range(1, int(math.floor(config.duration * config.rates.ble_hz + 1e-9)) + 1):
        events.append((quantize9(k / config.rates.ble_hz), _CH_RSSI, k))
    if config.noise.bearing_sigma > 0:
        for k in range(1, int(math.floor(config.duration * config.rates.ble_hz + 1e-9)) + 1):
            events.append((quantize9(k / config.rates.ble_hz), _CH_BEARING, k))
    for k in range(1, int(math.floor(config.duration * config.rates.depth_hz + 1e-9)) + 1):
        events.append((quantize9(k / config.rates.depth_hz), _CH_DEPTH, k))
    events.sort(key=lambda e: (e[0], e[1]))

    observations: list[OdometryDelta | RssiObservation | BearingObservation] = []
    gmap = GlobalMap(config.voxel_size)
    icp_rows: list[IcpRow] = []
    depth_frames: list[tuple[float, DepthMap]] = []
    ekf_noise = config.noise.ekf_noise()

    for t, channel, k in events:
        if channel == _CH_ODOM:
            odo = simulate_odometry(poses[k - 1], poses[k], ekf_noise, rng_odom, t)
            filt.process(odo)
            observations.append(odo)
        elif channel == _CH_RSSI:
            pose_t = _interpolated_pose(poses, t, dt)
            for beacon in world.beacons:
                obs = simulate_rssi(pose_t, beacon, config.receiver_height, rng_rssi, t)
                filt.process(obs)
                observations.append(obs)
        elif channel == _CH_BEARING:
            pose_t = _interpolated_pose(poses, t, dt)
            for beacon in world.beacons:
                obs = simulate_bearing(
                    pose_t, beacon, config.noise.bearing_sigma, rng_bearing, t
                )
                filt.process(obs)
                observations.append(obs)
        else:
            pose_t = _interpolated_pose(poses, t, dt)
            depth = raycast_depth(world, pose2_to_transform3(pose_t, mount), intr)
            depth = apply_depth_noise(
                depth,
                config.noise.depth_sigma_rel,
                config.noise.depth_quantize_mm,
                rng_depth,
                intr.max_depth,
            )
            if config.keep_depth:
                depth_frames.append((t, depth))
            if not depth.valid.any():
                continue
            cloud = back_project(depth, intr)
            near = cloud.points[cloud.points[:, 2] <= config.map_max_range]
            if len(near) == 0:
                continue
            seed_pose = filt.state.mean if config.map_seed == "ekf" else pose_t
            scan = Scan(PointCloud(near), seed_pose, filt.state.cov, t)
            refined, result = insert_scan(gmap, scan, mount, icp_params)
            robot = transform_to_pose2(refined.compose(mount_inv))
            if isinstance(result, IcpResult):
                icp_rows.append(IcpRow(t, robot, result.converged, result.rmse, False))
            else:
                icp_rows.append(IcpRow(t, robot, False, float("nan"), True))

    metrics: dict[str, float] = {
        "gated_rssi": float(filt.gated_rssi),
        "gated_bearing": float(filt.gated_bearing),
        "n_scans": float(len(icp_rows)),
        "n_voxels": float(len(gmap)),
    }
    if filt.rows:
        est = [(r.timestamp, r.estimate) for r in filt.rows]
        dead = [(r.timestamp, r.dead_reckoning) for r in filt.rows]
        for key, value in pose_rmse(est, truth).items():
            metrics[key] = value
        metrics["dead_reckoning_rmse_xy_m"] = pose_rmse(dead, truth)["rmse_xy_m"]
    if len(gmap) > 0:
        stats = map_error(gmap, world)
        metrics["map_mean_abs_m"] = stats.mean_abs_m
        metrics["map_p95_abs_m"] = stats.p95_abs_m
        metrics["map_outlier_fraction"] = stats.outlier_fraction

    return SimLog(
        config=config,
        world=world,
        initial_pose=initial,
        truth=truth,
        observations=observations,
        rows=filt.rows,
        map=gmap,
        icp_rows=icp_rows,
        gated_rssi=filt.gated_rssi,
        gated_bearing=filt.gated_bearing,
        metrics=metrics,
        depth_frames=depth_frames,
    )
