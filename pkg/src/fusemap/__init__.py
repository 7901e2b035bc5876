"""Sensor fusion and mapping for a beacon-equipped depth-camera robot.

The package covers the full pipeline: depth images to point clouds and
heightmaps, BLE RSSI localization through an extended Kalman filter, ICP
scan registration into a voxel map, and a deterministic simulator that
exercises all of it against a synthetic ground truth.
"""

from .ble import (
    Beacon,
    BearingObservation,
    OdometryDelta,
    PathLossParams,
    RssiObservation,
    expected_rssi,
    rssi_to_distance,
    trilaterate_grid,
)
from .depth import (
    CameraIntrinsics,
    ColorImage,
    DepthMap,
    FloorFitError,
    HeightMap,
    Plane,
    PointCloud,
    RansacParams,
    back_project,
    fit_floor_plane,
    height_map,
    project,
)
from .ekf import (
    EkfNoise,
    EkfState,
    FusionFilter,
    ekf_predict,
    ekf_update_bearing,
    ekf_update_rssi,
)
from .geometry import (
    Pose2,
    RigidTransform3,
    compose,
    invert,
    pose2_to_transform3,
    transform_to_pose2,
    wrap_angle,
)
from .mapping import (
    CorrespondenceError,
    GlobalMap,
    IcpParams,
    IcpResult,
    Scan,
    icp_register,
    insert_scan,
    map_error,
    voxel_downsample,
)
from .metrics import (
    LossWeights,
    SsimParams,
    combined_loss,
    depth_l2,
    grad_loss,
    ssim,
    threshold_accuracy,
)
from .sim import (
    CameraConfig,
    NoiseConfig,
    Rates,
    ScenarioConfig,
    SimLog,
    TrajectorySpec,
    WorldConfig,
    pose_rmse,
    run_scenario,
    sample_trajectory,
)
from .world import Box, World, camera_mount, raycast_depth

__version__ = "0.1.0"

__all__ = [
    "Beacon",
    "BearingObservation",
    "Box",
    "CameraConfig",
    "CameraIntrinsics",
    "ColorImage",
    "CorrespondenceError",
    "DepthMap",
    "EkfNoise",
    "EkfState",
    "FloorFitError",
    "FusionFilter",
    "GlobalMap",
    "HeightMap",
    "IcpParams",
    "IcpResult",
    "LossWeights",
    "NoiseConfig",
    "OdometryDelta",
    "PathLossParams",
    "Plane",
    "PointCloud",
    "Pose2",
    "RansacParams",
    "Rates",
    "RigidTransform3",
    "RssiObservation",
    "Scan",
    "ScenarioConfig",
    "SimLog",
    "SsimParams",
    "TrajectorySpec",
    "World",
    "WorldConfig",
    "back_project",
    "camera_mount",
    "combined_loss",
    "compose",
    "depth_l2",
    "ekf_predict",
    "ekf_update_bearing",
    "ekf_update_rssi",
    "expected_rssi",
    "fit_floor_plane",
    "grad_loss",
    "height_map",
    "icp_register",
    "insert_scan",
    "invert",
    "map_error",
    "pose2_to_transform3",
    "pose_rmse",
    "project",
    "raycast_depth",
    "rssi_to_distance",
    "run_scenario",
    "sample_trajectory",
    "ssim",
    "threshold_accuracy",
    "transform_to_pose2",
    "trilaterate_grid",
    "voxel_downsample",
    "wrap_angle",
]
