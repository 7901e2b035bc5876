"""Command-line front end.

Subcommands: simulate (run a scenario), depth2cloud (depth image to
cloud/heightmap), fuse (offline EKF replay of an observation log),
register (ICP between two clouds), metrics (score trajectories or maps).

Exit codes: 0 success, 1 runtime failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import fileio
from .config import ConfigError, config_with_overrides
from .depth import PointCloud, back_project, fit_floor_plane, height_map
from .ekf import FusionFilter
from .geometry import Pose2
from .mapping import GlobalMap, icp_register, map_error
from .sim import SCENARIO_INITIAL_COV, channel_rng, pose_rmse, quantize9, run_scenario


def _require_inputs(*paths: str | None) -> None:
    for p in paths:
        if p is not None and not Path(p).exists():
            raise ConfigError(f"input path {p} does not exist")


def _print_metrics(metrics: dict[str, float], as_json: bool) -> None:
    if as_json:
        print(json.dumps({k: quantize9(float(v)) for k, v in metrics.items()}, sort_keys=True))
    else:
        for key in sorted(metrics):
            print(f"{key} {metrics[key]:.9g}")


def cmd_simulate(args: argparse.Namespace) -> int:
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    _require_inputs(args.config)
    config = config_with_overrides(args.config, overrides)
    log = run_scenario(config)
    written = fileio.save_simlog(log, args.out)
    _print_metrics(log.metrics, as_json=False)
    for path in written:
        print(f"wrote {path}")
    return 0


def cmd_depth2cloud(args: argparse.Namespace) -> int:
    _require_inputs(args.depth, args.intrinsics, args.color)
    depth = fileio.read_depth_pgm(args.depth)
    intr = fileio.read_intrinsics(args.intrinsics)
    color = fileio.read_ppm(args.color) if args.color else None
    cloud = back_project(depth, intr, color=color)
    if len(cloud) == 0:
        raise RuntimeError("empty cloud: depth image has no valid pixels")
    fileio.write_ply(args.out, cloud)
    print(f"wrote {args.out} ({len(cloud)} points)")
    if args.heightmap:
        plane = fit_floor_plane(cloud)
        hm = height_map(depth, intr, plane)
        fileio.write_height_pgm(args.heightmap, hm)
        n = plane.normal
        print(
            f"floor normal {n[0]:.9g} {n[1]:.9g} {n[2]:.9g} offset {plane.offset:.9g}"
        )
        print(f"wrote {args.heightmap}")
    return 0


def cmd_fuse(args: argparse.Namespace) -> int:
    _require_inputs(args.observations, args.beacons, args.config)
    initial, observations = fileio.read_observations_csv(args.observations)
    beacons = fileio.read_beacons_csv(args.beacons)
    config = config_with_overrides(args.config, list(args.overrides))
    filt = FusionFilter(
        initial if initial is not None else Pose2(0.0, 0.0, 0.0),
        beacons,
        config.receiver_height,
        config.noise.ekf_noise(),
        SCENARIO_INITIAL_COV,
    )
    filt.process_all(observations)
    fileio.write_estimates_csv(args.out, filt.rows)
    print(f"wrote {args.out} ({len(filt.rows)} poses, {filt.gated_rssi} gated rssi)")
    return 0


def cmd_register(args: argparse.Namespace) -> int:
    _require_inputs(args.source, args.target)
    source = fileio.read_ply(args.source)
    target = fileio.read_ply(args.target)
    result = icp_register(source, target)
    r, t = result.transform.rotation, result.transform.translation
    for i in range(3):
        print(f"{r[i, 0]:.9g} {r[i, 1]:.9g} {r[i, 2]:.9g} {t[i]:.9g}")
    print(
        f"rmse {result.rmse:.9g} iterations {result.iterations} "
        f"converged {int(result.converged)} correspondences {result.correspondences}"
    )
    if args.out:
        fileio.write_ply(
            args.out, PointCloud(result.transform.apply(source.points), colors=source.colors)
        )
        print(f"wrote {args.out}")
    return 0


def cmd_metrics(args: argparse.Namespace) -> int:
    if args.map is not None:
        _require_inputs(args.map, args.config)
        config = config_with_overrides(args.config, list(args.overrides))
        cloud = fileio.read_ply(args.map)
        world = config.world.build(channel_rng(config.seed, 0), config.noise.sigma_sh)
        gmap = GlobalMap(config.voxel_size)
        gmap.insert_points(cloud.points)
        stats = map_error(gmap, world)
        _print_metrics(
            {
                "map_mean_abs_m": stats.mean_abs_m,
                "map_p95_abs_m": stats.p95_abs_m,
                "map_outlier_fraction": stats.outlier_fraction,
            },
            args.json,
        )
        return 0
    if args.estimated is None or args.truth is None:
        raise ConfigError("metrics needs either --map with --config, or --estimated with --truth")
    _require_inputs(args.estimated, args.truth)
    estimated = fileio.read_poses_csv(args.estimated, role="estimated")
    truth = fileio.read_poses_csv(args.truth, role="truth")
    _print_metrics(pose_rmse(estimated, truth), args.json)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fusemap",
        description="sensor fusion and mapping over synthetic depth, BLE and odometry streams",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write its logs")
    p.add_argument("--config", help="scenario YAML; defaults apply when omitted")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="config override with dotted keys, repeatable",
    )
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("depth2cloud", help="convert a depth image to a point cloud")
    p.add_argument("--depth", required=True, help="16-bit PGM depth image, millimeters")
    p.add_argument("--intrinsics", required=True, help="sidecar intrinsics file")
    p.add_argument("--out", required=True, help="output PLY path")
    p.add_argument("--color", help="optional PPM color image to attach")
    p.add_argument("--heightmap", help="also fit the floor and write a height PGM here")
    p.set_defaults(func=cmd_depth2cloud)

    p = sub.add_parser("fuse", help="replay an observation log through the EKF")
    p.add_argument("--observations", required=True, help="observation CSV from simulate")
    p.add_argument("--beacons", required=True, help="beacon CSV from simulate")
    p.add_argument("--out", required=True, help="output trajectory CSV")
    p.add_argument("--config", help="scenario YAML for noise and receiver height")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE"
    )
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("register", help="ICP-align one PLY cloud onto another")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--out", help="optional PLY of the transformed source")
    p.set_defaults(func=cmd_register)

    p = sub.add_parser("metrics", help="score a trajectory or a map")
    p.add_argument("--estimated", help="estimate CSV (fuse output or trajectory.csv)")
    p.add_argument("--truth", help="truth CSV (trajectory.csv or plain x,y,theta)")
    p.add_argument("--map", help="map PLY to score against the configured world")
    p.add_argument("--config", help="scenario YAML describing the world")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE"
    )
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_metrics)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main_entry() -> None:
    sys.exit(main(sys.argv[1:]))
