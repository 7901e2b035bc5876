"""File formats: ASCII PLY clouds, 16-bit PGM depth and height images
with sidecar intrinsics, CSV logs, and YAML metric summaries.

All numeric text is written with 9 significant digits. Observation logs
round-trip exactly because the simulator quantizes to the same precision
when it emits values.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import yaml

from .ble import Beacon, BearingObservation, OdometryDelta, PathLossParams, RssiObservation
from .depth import CameraIntrinsics, ColorImage, DepthMap, HeightMap, PointCloud
from .ekf import FusionRow
from .geometry import Pose2
from .sim import SimLog, quantize9

Observation = OdometryDelta | RssiObservation | BearingObservation


def _fmt(x: float) -> str:
    return f"{x:.9g}"


# ---------------------------------------------------------------- PLY

def write_ply(path: str | Path, cloud: PointCloud) -> None:
    """ASCII PLY with float vertex positions and optional uchar colors."""
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
    ]
    if cloud.colors is not None:
        lines += ["property uchar red", "property uchar green", "property uchar blue"]
    lines.append("end_header")
    if cloud.colors is None:
        for p in cloud.points:
            lines.append(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}")
    else:
        for p, c in zip(cloud.points, cloud.colors):
            lines.append(
                f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])} {int(c[0])} {int(c[1])} {int(c[2])}"
            )
    Path(path).write_text("\n".join(lines) + "\n")


def read_ply(path: str | Path) -> PointCloud:
    """Read an ASCII PLY written by write_ply (x, y, z and optional rgb)."""
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ValueError(f"{path}: not a PLY file")
    n_vertices = None
    has_color = False
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            n_vertices = int(parts[2])
        elif parts[:2] == ["property", "uchar"]:
            has_color = True
        elif parts == ["format", "ascii", "1.0"]:
            pass
        elif parts and parts[0] == "end_header":
            body_start = i + 1
            break
    if n_vertices is None or body_start is None:
        raise ValueError(f"{path}: missing vertex element or end_header")
    body = lines[body_start : body_start + n_vertices]
    if len(body) < n_vertices:
        raise ValueError(f"{path}: expected {n_vertices} vertices, found {len(body)}")
    points = np.empty((n_vertices, 3))
    colors = np.empty((n_vertices, 3), dtype=np.uint8) if has_color else None
    for i, line in enumerate(body):
        parts = line.split()
        points[i] = [float(parts[0]), float(parts[1]), float(parts[2])]
        if has_color:
            colors[i] = [int(parts[3]), int(parts[4]), int(parts[5])]
    return PointCloud(points, colors=colors)


# ------------------------------------------------- PGM depth / height

def write_depth_pgm(path: str | Path, depth: DepthMap) -> None:
    """16-bit binary PGM, millimeter depths, 0 for invalid pixels."""
    mm = np.round(depth.values * 1000.0)
    mm = np.where(depth.valid, np.clip(mm, 1, 65535), 0).astype(">u2")
    header = f"P5\n{depth.width} {depth.height}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + mm.tobytes())


def read_depth_pgm(path: str | Path) -> DepthMap:
    data = Path(path).read_bytes()
    width, height, maxval, pos = _read_pnm_header(data, b"P5", path)
    if maxval != 65535:
        raise ValueError(f"{path}: expected 16-bit PGM, maxval {maxval}")
    raw = np.frombuffer(data, dtype=">u2", offset=pos, count=width * height)
    mm = raw.reshape(height, width).astype(np.float64)
    valid = mm > 0
    return DepthMap(np.where(valid, mm / 1000.0, 0.0), valid)


def _read_pnm_header(data: bytes, magic: bytes, path) -> tuple[int, int, int, int]:
    fields = []
    pos = 0
    while len(fields) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != magic:
        raise ValueError(f"{path}: expected {magic.decode()} image, found {fields[0]!r}")
    return int(fields[1]), int(fields[2]), int(fields[3]), pos


def write_ppm(path: str | Path, image: ColorImage) -> None:
    """24-bit binary PPM."""
    h, w = image.rgb.shape[:2]
    header = f"P6\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + image.rgb.tobytes())


def read_ppm(path: str | Path) -> ColorImage:
    data = Path(path).read_bytes()
    width, height, maxval, pos = _read_pnm_header(data, b"P6", path)
    if maxval != 255:
        raise ValueError(f"{path}: expected 8-bit PPM, maxval {maxval}")
    raw = np.frombuffer(data, dtype=np.uint8, offset=pos, count=width * height * 3)
    return ColorImage(raw.reshape(height, width, 3).copy())


def write_height_pgm(path: str | Path, hm: HeightMap) -> None:
    """Heights in millimeters offset by one (0 = invalid); negatives clamp to 1."""
    mm = np.round(hm.heights * 1000.0) + 1.0
    mm = np.where(hm.valid, np.clip(mm, 1, 65535), 0).astype(">u2")
    h, w = hm.heights.shape
    header = f"P5\n{w} {h}\n65535\n".encode("ascii")
    Path(path).write_bytes(header + mm.tobytes())


def write_intrinsics(path: str | Path, intr: CameraIntrinsics) -> None:
    """Whitespace sidecar: fx fy cx cy width height max_depth."""
    Path(path).write_text(
        f"{_fmt(intr.fx)} {_fmt(intr.fy)} {_fmt(intr.cx)} {_fmt(intr.cy)} "
        f"{intr.width} {intr.height} {_fmt(intr.max_depth)}\n"
    )


def read_intrinsics(path: str | Path) -> CameraIntrinsics:
    parts = Path(path).read_text().split()
    if len(parts) != 7:
        raise ValueError(f"{path}: expected 7 intrinsics fields, found {len(parts)}")
    return CameraIntrinsics(
        float(parts[0]),
        float(parts[1]),
        float(parts[2]),
        float(parts[3]),
        int(parts[4]),
        int(parts[5]),
        float(parts[6]),
    )


# ----------------------------------------------------------- CSV logs

def write_observations_csv(
    path: str | Path, initial: Pose2, observations: list[Observation]
) -> None:
    """Time-ordered event log, one row per observation.

    The first row records the initial pose the filter started from, so a
    replay can reconstruct the exact same starting state.
    """
    lines = ["t,kind,beacon_id,v1,v2,v3"]
    lines.append(f"0,init,,{_fmt(initial.x)},{_fmt(initial.y)},{_fmt(initial.theta)}")
    for obs in observations:
        if isinstance(obs, OdometryDelta):
            lines.append(
                f"{_fmt(obs.timestamp)},odom,,"
                f"{_fmt(obs.d_rot1)},{_fmt(obs.d_trans)},{_fmt(obs.d_rot2)}"
            )
        elif isinstance(obs, RssiObservation):
            lines.append(f"{_fmt(obs.timestamp)},rssi,{obs.beacon_id},{_fmt(obs.rssi)},,")
        elif isinstance(obs, BearingObservation):
            lines.append(
                f"{_fmt(obs.timestamp)},bearing,{obs.beacon_id},"
                f"{_fmt(obs.bearing)},{_fmt(obs.sigma)},"
            )
        else:
            raise TypeError(f"unsupported observation type {type(obs).__name__}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_observations_csv(path: str | Path) -> tuple[Pose2 | None, list[Observation]]:
    """Parse an observation log; raises with the line number on bad rows."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split(",")[0] != "t":
        raise ValueError(f"{path}: missing header row")
    initial = None
    out: list[Observation] = []
    last_t = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 6:
            raise ValueError(f"{path} line {lineno}: expected 6 columns, found {len(cells)}")
        t = float(cells[0])
        kind = cells[1]
        if kind == "init":
            initial = Pose2(float(cells[3]), float(cells[4]), float(cells[5]))
            continue
        if last_t is not None and t < last_t:
            raise ValueError(f"{path} line {lineno}: timestamp {t} out of order")
        last_t = t
        if kind == "odom":
            out.append(OdometryDelta(float(cells[3]), float(cells[4]), float(cells[5]), t))
        elif kind == "rssi":
            out.append(RssiObservation(cells[2], float(cells[3]), t))
        elif kind == "bearing":
            out.append(BearingObservation(cells[2], float(cells[3]), t, float(cells[4])))
        else:
            raise ValueError(f"{path} line {lineno}: unknown kind {kind!r}")
    return initial, out


def write_beacons_csv(path: str | Path, beacons: list[Beacon]) -> None:
    lines = ["id,x,y,z,p0_dbm,n,d0,sigma_sh"]
    for b in beacons:
        pl = b.path_loss
        lines.append(
            f"{b.id},{_fmt(b.position[0])},{_fmt(b.position[1])},{_fmt(b.position[2])},"
            f"{_fmt(pl.p0_dbm)},{_fmt(pl.n)},{_fmt(pl.d0)},{_fmt(pl.sigma_sh)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_beacons_csv(path: str | Path) -> list[Beacon]:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("id,"):
        raise ValueError(f"{path}: missing header row")
    beacons = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 8:
            raise ValueError(f"{path} line {lineno}: expected 8 columns, found {len(cells)}")
        beacons.append(
            Beacon(
                cells[0],
                np.array([float(cells[1]), float(cells[2]), float(cells[3])]),
                PathLossParams(
                    float(cells[4]), float(cells[5]), float(cells[6]), float(cells[7])
                ),
            )
        )
    return beacons


def write_trajectory_csv(path: str | Path, log: SimLog) -> None:
    """Per-odometry-event rows: truth pose, fused estimate, covariance trace."""
    truth = {t: p for t, p in log.truth}
    lines = ["t,truth_x,truth_y,truth_theta,est_x,est_y,est_theta,cov_trace"]
    for row in log.rows:
        ref = truth[row.timestamp]
        est = row.estimate
        lines.append(
            f"{_fmt(row.timestamp)},{_fmt(ref.x)},{_fmt(ref.y)},{_fmt(ref.theta)},"
            f"{_fmt(est.x)},{_fmt(est.y)},{_fmt(est.theta)},{_fmt(row.cov_trace)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_estimates_csv(path: str | Path, rows: list[FusionRow]) -> None:
    """Estimated trajectory alone, the offline-replay output format."""
    lines = ["t,x,y,theta,cov_trace"]
    for row in rows:
        est = row.estimate
        lines.append(
            f"{_fmt(row.timestamp)},{_fmt(est.x)},{_fmt(est.y)},{_fmt(est.theta)},"
            f"{_fmt(row.cov_trace)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_refined_poses_csv(path: str | Path, log: SimLog) -> None:
    """Scan registration results: one row per inserted depth frame."""
    lines = ["t,x,y,theta,converged,rmse"]
    for row in log.icp_rows:
        lines.append(
            f"{_fmt(row.timestamp)},{_fmt(row.pose.x)},{_fmt(row.pose.y)},"
            f"{_fmt(row.pose.theta)},{int(row.converged)},{_fmt(row.rmse)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_poses_csv(path: str | Path, role: str = "estimated") -> list[tuple[float, Pose2]]:
    """Read timestamped poses from a trajectory or estimate CSV.

    A trajectory file carries both truth_* and est_* columns; `role`
    ("estimated" or "truth") picks which set. Files with plain x,y,theta
    columns work for either role.
    """
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = lines[0].split(",")
    col = {name: i for i, name in enumerate(header)}
    prefix = "est_" if role == "estimated" else "truth_"
    if f"{prefix}x" in col:
        ix, iy, ith = col[f"{prefix}x"], col[f"{prefix}y"], col[f"{prefix}theta"]
    elif "x" in col:
        ix, iy, ith = col["x"], col["y"], col["theta"]
    else:
        raise ValueError(f"{path}: no {prefix}x or x column in header")
    if "t" not in col:
        raise ValueError(f"{path}: no t column in header")
    it = col["t"]
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        cells = line.split(",")
        out.append(
            (float(cells[it]), Pose2(float(cells[ix]), float(cells[iy]), float(cells[ith])))
        )
    return out


def write_metrics_yaml(path: str | Path, metrics: dict[str, float]) -> None:
    rounded = {k: quantize9(float(v)) for k, v in sorted(metrics.items())}
    Path(path).write_text(yaml.safe_dump(rounded, sort_keys=True))


# ------------------------------------------------------ run directory

def save_simlog(log: SimLog, out_dir: str | Path) -> list[Path]:
    """Write the standard output set for one scenario run.

    trajectory.csv, observations.csv, map.ply, metrics.yaml, plus
    beacons.csv (replay input) and refined_poses.csv (registration log).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", log)
    write_observations_csv(out / "observations.csv", log.initial_pose, log.observations)
    write_ply(out / "map.ply", PointCloud(log.map.points()))
    write_metrics_yaml(out / "metrics.yaml", log.metrics)
    write_beacons_csv(out / "beacons.csv", list(log.world.beacons))
    write_refined_poses_csv(out / "refined_poses.csv", log)
    return [
        out / "trajectory.csv",
        out / "observations.csv",
        out / "map.ply",
        out / "metrics.yaml",
        out / "beacons.csv",
        out / "refined_poses.csv",
    ]
