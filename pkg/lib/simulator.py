"""
Synthetic multi-beam LiDAR over analytic scenes

Scenes are planes, boxes and vertical cylinders with world poses; rays are
intersected in closed form so every returned point (before range noise)
lies exactly on a surface. Ray order is channel-major, azimuth-minor.

Usage:
    scene = corridor_scene(length=20.0)
    preset = get_preset("HDL-64S2")
    scan = simulate_scan(scene, preset, Pose6(z=1.3), seed=7)
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import FormatError
from .geometry import Pose6, Scan, to_matrix
from .pcd_io import write_scan, write_trajectory

logger = logging.getLogger(__name__)

DEFAULT_INTENSITY = 100.0
HIT_EPSILON = 1e-9

PathLike = Union[str, Path]
Trajectory = List[Tuple[float, Pose6]]


# ---------------------------------------------------------------------------
# Sensor presets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensorPreset:
    """
    Spinning multi-beam sensor model

    Beams are spaced uniformly over ``vfov_deg`` around ``center_deg``
    unless ``elevations_deg`` lists the exact per-beam angles.
    """

    name: str
    channels: int
    vfov_deg: float
    vres_deg: float
    hres_deg: float
    max_range: float
    min_range: float
    range_sigma: float
    center_deg: float = 0.0
    elevations_deg: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        if not (0.0 < self.min_range < self.max_range):
            raise ValueError("need 0 < min_range < max_range")
        if self.hres_deg <= 0 or self.vfov_deg < 0 or self.vres_deg < 0:
            raise ValueError("angular resolutions must be positive")
        if self.range_sigma < 0:
            raise ValueError("range_sigma must be >= 0")
        if self.vres_deg * (self.channels - 1) > self.vfov_deg + 1e-9:
            raise ValueError(f"{self.name}: vres_deg * (channels - 1) exceeds vfov_deg")
        if self.elevations_deg is not None:
            object.__setattr__(self, "elevations_deg", tuple(float(e) for e in self.elevations_deg))
            if len(self.elevations_deg) != self.channels:
                raise ValueError("elevations_deg must list one angle per channel")

    @property
    def n_azimuths(self) -> int:
        return int(round(360.0 / self.hres_deg))

    def elevations(self) -> np.ndarray:
        """Beam elevation angles in radians, lowest first"""
        if self.elevations_deg is not None:
            return np.radians(np.asarray(self.elevations_deg))
        if self.channels == 1:
            return np.radians(np.array([self.center_deg]))
        half = self.vres_deg * (self.channels - 1) / 2.0
        return np.radians(self.center_deg + np.linspace(-half, half, self.channels))

    def with_overrides(self, **overrides) -> "SensorPreset":
        return replace(self, **overrides)


def _uniform(name, channels, vfov, max_range, min_range, sigma, center=0.0, hres=0.2) -> SensorPreset:
    vres = vfov / (channels - 1) if channels > 1 else 0.0
    return SensorPreset(name, channels, vfov, vres, hres, max_range, min_range, sigma, center)


# Uniform spacing replaces variable beam tables. Range-dependent precision
# (Hesai/RoboSense 0.05 m below 0.5 m, Ouster 0.015-0.10 m by range band,
# HDL-64S2 0.05 m on 20% of channels) is reduced to the headline value.
# Sensors without a published minimum range use 1 m.
SENSOR_PRESETS: Dict[str, SensorPreset] = {
    p.name: p for p in (
        _uniform("VLS-128AP", 128, 40.0, 245.0, 1.0, 0.03, center=-5.0),
        _uniform("VLS-128", 128, 40.0, 300.0, 1.0, 0.03, center=-5.0),
        _uniform("HDL-64S2", 64, 26.9, 120.0, 3.0, 0.02, center=-11.45),
        _uniform("HDL-32E", 32, 41.33, 100.0, 2.0, 0.02, center=-10.0),
        _uniform("VLP-32C", 32, 40.0, 200.0, 1.0, 0.03, center=-5.0),
        _uniform("VLP-16", 16, 30.0, 100.0, 1.0, 0.03),
        _uniform("Pandar-64", 64, 40.0, 200.0, 0.3, 0.02, center=-5.0),
        _uniform("Pandar-40P", 40, 40.0, 200.0, 0.3, 0.02, center=-5.0),
        _uniform("OS1-64", 64, 33.2, 120.0, 0.8, 0.03),
        _uniform("RS-Lidar32", 32, 40.0, 200.0, 0.4, 0.03, center=-5.0),
    )
}


def get_preset(name: str) -> SensorPreset:
    """Built-in preset by name (case-insensitive)"""
    for key, preset in SENSOR_PRESETS.items():
        if key.lower() == name.lower():
            return preset
    raise ValueError(f"unknown sensor preset {name!r}; known: {', '.join(SENSOR_PRESETS)}")


def parse_preset(text: str, source: str = "<string>") -> SensorPreset:
    """
    Parse a ``key = value`` preset file

    ``base = VLP-16`` starts from a built-in preset; ``elevations_deg``
    takes a comma separated list.
    """
    kinds = {f.name: f.type for f in fields(SensorPreset)}
    values: Dict = {}
    base = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise FormatError("expected key = value", path=source, line=lineno)
        key, raw = (part.strip() for part in stripped.split("=", 1))
        try:
            if key == "base":
                base = get_preset(raw)
            elif key == "elevations_deg":
                values[key] = tuple(float(v) for v in raw.split(",") if v.strip())
            elif key not in kinds:
                raise FormatError(f"unknown preset key {key!r}", path=source, line=lineno)
            elif kinds[key] == "int":
                values[key] = int(raw)
            elif kinds[key] == "float":
                values[key] = float(raw)
            else:
                values[key] = raw
        except FormatError:
            raise
        except ValueError as exc:
            raise FormatError(f"bad value for {key}: {exc}", path=source, line=lineno) from exc

    if base is not None:
        return base.with_overrides(**values)
    if "elevations_deg" in values:
        values.setdefault("channels", len(values["elevations_deg"]))
        e = values["elevations_deg"]
        values.setdefault("vfov_deg", max(e) - min(e))
        values.setdefault("vres_deg", 0.0)
    missing = [f.name for f in fields(SensorPreset)
               if f.name not in values and f.name not in ("center_deg", "elevations_deg")]
    if missing:
        raise FormatError(f"missing preset keys: {', '.join(missing)}", path=source)
    return SensorPreset(**values)


def load_preset(name_or_path: Union[str, Path]) -> SensorPreset:
    """Built-in preset name, or path to a preset file"""
    path = Path(name_or_path)
    if path.suffix and path.exists():
        return parse_preset(path.read_text(), source=str(path))
    return get_preset(str(name_or_path))


# ---------------------------------------------------------------------------
# Scenes
# ---------------------------------------------------------------------------

PRIMITIVE_DIMS = {"plane": (0, 2), "box": (3, 3), "cylinder": (2, 2)}


@dataclass(frozen=True)
class Primitive:
    """
    One analytic surface

    plane: z = 0 of its local frame; dims (half_x, half_y) or () for unbounded
    box: dims (size_x, size_y, size_z), centred on the pose
    cylinder: vertical local z axis, dims (radius, height), base at the pose
    """

    kind: str
    pose: Pose6
    dims: Tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in PRIMITIVE_DIMS:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        dims = tuple(float(d) for d in self.dims)
        object.__setattr__(self, "dims", dims)
        allowed = PRIMITIVE_DIMS[self.kind]
        if len(dims) not in allowed:
            raise ValueError(f"{self.kind} takes {' or '.join(str(a) for a in sorted(set(allowed)))} dimensions")
        if any(not math.isfinite(d) or d <= 0 for d in dims):
            raise ValueError(f"{self.kind} dimensions must be finite and > 0")

    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """Ray parameter of the nearest hit per direction, inf on miss"""
        R, t = to_matrix(self.pose)
        o = R.T @ (origin - t)
        d = directions @ R
        return _INTERSECTORS[self.kind](o, d, self.dims)


def _plane_hits(o, d, dims):
    dz = d[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -o[2] / dz
    ok = (np.abs(dz) > 1e-12) & (t > HIT_EPSILON)
    if dims:
        p = o[None, :2] + t[:, None] * d[:, :2]
        ok &= (np.abs(p[:, 0]) <= dims[0]) & (np.abs(p[:, 1]) <= dims[1])
    return np.where(ok, t, np.inf)


def _box_hits(o, d, dims):
    half = np.asarray(dims) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-half - o) / d
        t2 = (half - o) / d
    inside_slab = np.abs(o) <= half
    t1 = np.where(np.isnan(t1), np.where(inside_slab, -np.inf, np.inf), t1)
    t2 = np.where(np.isnan(t2), np.where(inside_slab, np.inf, -np.inf), t2)
    t_near = np.max(np.minimum(t1, t2), axis=1)
    t_far = np.min(np.maximum(t1, t2), axis=1)
    t = np.where(t_near > HIT_EPSILON, t_near, t_far)
    ok = (t_far >= t_near) & (t > HIT_EPSILON)
    return np.where(ok, t, np.inf)


def _cylinder_hits(o, d, dims):
    radius, height = dims
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2.0 * (o[0] * d[:, 0] + o[1] * d[:, 1])
    c = o[0] ** 2 + o[1] ** 2 - radius ** 2
    disc = b * b - 4.0 * a * c
    valid = (a > 1e-12) & (disc >= 0.0)
    root = np.sqrt(np.where(valid, disc, 0.0))
    safe_a = np.where(valid, a, 1.0)
    out = np.full(d.shape[0], np.inf)
    for t in ((-b + root) / (2.0 * safe_a), (-b - root) / (2.0 * safe_a)):
        z = o[2] + t * d[:, 2]
        ok = valid & (t > HIT_EPSILON) & (z >= 0.0) & (z <= height)
        out = np.where(ok & (t < out), t, out)
    return out


_INTERSECTORS = {"plane": _plane_hits, "box": _box_hits, "cylinder": _cylinder_hits}


@dataclass(frozen=True)
class Scene:
    primitives: Tuple[Primitive, ...]

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))
        if not self.primitives:
            raise ValueError("scene must hold at least one primitive")

    def __len__(self) -> int:
        return len(self.primitives)

    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        hits = np.stack([p.intersect(origin, directions) for p in self.primitives])
        return hits.min(axis=0)


def parse_scene(text: str, source: str = "<string>") -> Scene:
    """
    One primitive per line: ``kind x y z roll pitch yaw dims...``
    (meters, radians); ``#`` starts a comment
    """
    primitives = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        tokens = stripped.split()
        if len(tokens) < 7:
            raise FormatError("expected kind and six pose values", path=source, line=lineno)
        try:
            numbers = [float(v) for v in tokens[1:]]
            primitives.append(Primitive(tokens[0].lower(), Pose6(*numbers[:6]), tuple(numbers[6:])))
        except ValueError as exc:
            raise FormatError(str(exc), path=source, line=lineno) from exc
    if not primitives:
        raise FormatError("scene has no primitives", path=source)
    return Scene(tuple(primitives))


def read_scene(path: PathLike) -> Scene:
    path = Path(path)
    return parse_scene(path.read_text(), source=str(path))


def write_scene(scene: Scene, path: PathLike) -> None:
    lines = ["# kind x y z roll pitch yaw dims..."]
    for p in scene.primitives:
        values = list(p.pose.as_vector()) + list(p.dims)
        lines.append(" ".join([p.kind] + [f"{v:.9g}" for v in values]))
    Path(path).write_text("\n".join(lines) + "\n")


def room_scene(size_x: float = 12.0, size_y: float = 8.0, height: float = 3.0) -> Scene:
    """Closed room with furniture and a pillar; origin at the floor centre"""
    hx, hy = size_x / 2.0, size_y / 2.0
    half_pi = math.pi / 2.0
    return Scene((
        Primitive("plane", Pose6(), (hx, hy)),
        Primitive("plane", Pose6(z=height), (hx, hy)),
        Primitive("plane", Pose6(x=hx, z=height / 2, pitch=half_pi), (height / 2, hy)),
        Primitive("plane", Pose6(x=-hx, z=height / 2, pitch=half_pi), (height / 2, hy)),
        Primitive("plane", Pose6(y=hy, z=height / 2, roll=half_pi), (hx, height / 2)),
        Primitive("plane", Pose6(y=-hy, z=height / 2, roll=half_pi), (hx, height / 2)),
        Primitive("box", Pose6(x=3.5, y=2.2, z=0.5, yaw=0.3), (1.6, 0.8, 1.0)),
        Primitive("box", Pose6(x=-4.0, y=-2.5, z=0.4), (1.0, 1.2, 0.8)),
        Primitive("box", Pose6(x=-1.5, y=3.2, z=1.0), (2.5, 0.6, 2.0)),
        Primitive("cylinder", Pose6(x=1.8, y=-1.9), (0.3, height)),
    ))


def corridor_scene(length: float = 60.0, width: float = 4.6, height: float = 3.2) -> Scene:
    """
    Straight corridor along +x from x = -5 to ``length`` + 5

    Pillars, door frames and crates break the translational symmetry
    along the axis; their spacing is irregular so no two stretches match.
    """
    half_len = length / 2.0 + 5.0
    cx = length / 2.0
    hw = width / 2.0
    half_pi = math.pi / 2.0
    primitives = [
        Primitive("plane", Pose6(x=cx), (half_len, hw)),
        Primitive("plane", Pose6(x=cx, z=height), (half_len, hw)),
        Primitive("plane", Pose6(x=cx, y=hw, z=height / 2, roll=half_pi), (half_len, height / 2)),
        Primitive("plane", Pose6(x=cx, y=-hw, z=height / 2, roll=half_pi), (half_len, height / 2)),
        Primitive("plane", Pose6(x=-5.0, z=height / 2, pitch=half_pi), (height / 2, hw)),
        Primitive("plane", Pose6(x=length + 5.0, z=height / 2, pitch=half_pi), (height / 2, hw)),
    ]
    rng = np.random.default_rng(12345)
    x = -3.0
    side = 1.0
    while x < length + 4.0:
        primitives.append(Primitive("cylinder", Pose6(x=x, y=side * (hw - 0.35)), (0.2, height)))
        frame_x = x + rng.uniform(0.6, 1.1)
        primitives.append(Primitive(
            "box", Pose6(x=frame_x, y=-side * (hw - 0.15), z=height / 2), (0.2, 0.3, height)))
        crate_x = x + rng.uniform(1.2, 1.8)
        primitives.append(Primitive(
            "box",
            Pose6(x=crate_x, y=side * (hw - 0.45), z=0.35, yaw=rng.uniform(-0.4, 0.4)),
            (rng.uniform(0.4, 0.9), 0.5, 0.7),
        ))
        x += rng.uniform(1.8, 2.6)
        side = -side
    return Scene(tuple(primitives))


# ---------------------------------------------------------------------------
# Ray casting
# ---------------------------------------------------------------------------

def beam_directions(preset: SensorPreset) -> Tuple[np.ndarray, np.ndarray]:
    """
    Unit ray directions in the sensor frame

    Returns:
        (directions (channels * n_azimuths, 3), ring (same length,))
    """
    elevation = preset.elevations()
    azimuth = np.radians(np.arange(preset.n_azimuths) * preset.hres_deg)
    el, az = np.meshgrid(elevation, azimuth, indexing="ij")
    directions = np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)
    ring = np.repeat(np.arange(preset.channels), azimuth.size)
    return directions.reshape(-1, 3), ring


def simulate_scan(scene: Scene, preset: SensorPreset, pose: Pose6, seed: int = 0, stamp: float = 0.0) -> Scan:
    """
    One instantaneous sweep from a sensor at ``pose`` (world frame)

    Nearest hits within [min_range, max_range] become points in the sensor
    frame with Gaussian range noise (one draw per ray, seeded); misses
    yield no point. ring = channel index, timestamp = stamp.
    """
    directions, ring = beam_directions(preset)
    R, t = to_matrix(pose)
    ranges = scene.intersect(t, directions @ R.T)

    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, size=ranges.shape[0]) * preset.range_sigma

    hit = np.isfinite(ranges) & (ranges >= preset.min_range) & (ranges <= preset.max_range)
    measured = ranges[hit] + noise[hit]
    xyz = directions[hit] * measured[:, None]
    n = xyz.shape[0]
    return Scan(
        xyz,
        intensity=np.full(n, DEFAULT_INTENSITY),
        ring=ring[hit],
        timestamp=np.full(n, float(stamp)),
        frame_id="sensor",
        stamp=stamp,
    )


# ---------------------------------------------------------------------------
# Scene sampling (reference map stand-in)
# ---------------------------------------------------------------------------

def _rectangle(half_u: float, half_v: float, spacing: float) -> np.ndarray:
    u = np.linspace(-half_u, half_u, max(2, int(math.ceil(2 * half_u / spacing)) + 1))
    v = np.linspace(-half_v, half_v, max(2, int(math.ceil(2 * half_v / spacing)) + 1))
    uu, vv = np.meshgrid(u, v, indexing="ij")
    return np.column_stack([uu.ravel(), vv.ravel()])


def _primitive_surface(p: Primitive, spacing: float, extent: float) -> np.ndarray:
    """Surface samples in the primitive's local frame"""
    if p.kind == "plane":
        hu, hv = p.dims if p.dims else (extent, extent)
        uv = _rectangle(hu, hv, spacing)
        return np.column_stack([uv, np.zeros(len(uv))])
    if p.kind == "box":
        h = np.asarray(p.dims) / 2.0
        faces = []
        for axis in range(3):
            u_axis, v_axis = [a for a in range(3) if a != axis]
            uv = _rectangle(h[u_axis], h[v_axis], spacing)
            for sign in (-1.0, 1.0):
                face = np.zeros((len(uv), 3))
                face[:, axis] = sign * h[axis]
                face[:, u_axis] = uv[:, 0]
                face[:, v_axis] = uv[:, 1]
                faces.append(face)
        return np.vstack(faces)
    radius, height = p.dims
    n_around = max(8, int(math.ceil(2 * math.pi * radius / spacing)))
    n_up = max(2, int(math.ceil(height / spacing)) + 1)
    theta = np.linspace(0.0, 2 * math.pi, n_around, endpoint=False)
    z = np.linspace(0.0, height, n_up)
    tt, zz = np.meshgrid(theta, z, indexing="ij")
    return np.column_stack([radius * np.cos(tt).ravel(), radius * np.sin(tt).ravel(), zz.ravel()])


def sample_scene(scene: Scene, spacing: float = 0.1, noise: float = 0.0, seed: int = 0,
                 extent: float = 50.0) -> Scan:
    """
    Dense regular sampling of every surface, in the world frame

    Stands in for a survey-grade reference map. Unbounded planes are
    sampled over +-``extent``. ``noise`` adds isotropic Gaussian jitter.
    """
    if spacing <= 0:
        raise ValueError("spacing must be > 0")
    parts = []
    for p in scene.primitives:
        R, t = to_matrix(p.pose)
        parts.append(_primitive_surface(p, spacing, extent) @ R.T + t)
    xyz = np.vstack(parts)
    if noise > 0:
        xyz = xyz + np.random.default_rng(seed).normal(0.0, noise, size=xyz.shape)
    return Scan(xyz, frame_id="map")


# ---------------------------------------------------------------------------
# Drives
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GroundTruthDrive:
    poses: Tuple[Tuple[float, Pose6], ...]
    scene: Scene
    preset: SensorPreset
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple((float(s), p) for s, p in self.poses))
        if not self.poses:
            raise ValueError("drive needs at least one pose")
        stamps = [s for s, _ in self.poses]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError("drive stamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def trajectory(self) -> Trajectory:
        return list(self.poses)

    @property
    def duration(self) -> float:
        return self.poses[-1][0] - self.poses[0][0]


def straight_drive(
    scene: Scene,
    preset: SensorPreset,
    n_scans: int,
    length: float,
    height: float = 1.3,
    rate_hz: float = 10.0,
    start: Sequence[float] = (0.0, 0.0),
    seed: int = 0,
    ramp_scans: int = 0,
) -> GroundTruthDrive:
    """
    Drive along +x covering ``length`` meters

    With ``ramp_scans`` > 0 the vehicle starts from rest and its speed
    grows linearly over that many scan periods before cruising.
    """
    if n_scans < 1:
        raise ValueError("n_scans must be >= 1")
    if ramp_scans < 0:
        raise ValueError("ramp_scans must be >= 0")
    speeds = np.ones(max(n_scans - 1, 0))
    if ramp_scans > 0:
        speeds = np.minimum(np.arange(1, n_scans), ramp_scans) / ramp_scans
    travelled = np.concatenate([[0.0], np.cumsum(speeds)])
    if travelled[-1] > 0:
        travelled *= length / travelled[-1]
    poses = tuple(
        (i / rate_hz, Pose6(x=start[0] + float(travelled[i]), y=start[1], z=height))
        for i in range(n_scans)
    )
    return GroundTruthDrive(poses, scene, preset, seed)


def simulate_drive(drive: GroundTruthDrive, out_dir: Optional[PathLike] = None,
                   binary: bool = False) -> Tuple[List[Scan], Trajectory]:
    """
    One scan per drive pose; scan i uses seed ``drive.seed + i``

    With ``out_dir`` the scans are written as scan_0000.pcd, ... and the
    trajectory as ground_truth.csv.
    """
    scans = [
        simulate_scan(drive.scene, drive.preset, pose, seed=drive.seed + i, stamp=stamp)
        for i, (stamp, pose) in enumerate(drive.poses)
    ]
    trajectory = drive.trajectory
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for i, scan in enumerate(scans):
            write_scan(scan, out_dir / f"scan_{i:04d}.pcd", binary=binary)
        write_trajectory(trajectory, out_dir / "ground_truth.csv")
        logger.info("wrote %d scans to %s", len(scans), out_dir)
    return scans, trajectory
