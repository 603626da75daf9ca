"""
Point, scan and rigid-transform types shared by every pipeline stage

Euler convention (project-wide): extrinsic X-Y-Z, i.e.
R = R_z(yaw) @ R_y(pitch) @ R_x(roll), x' = R x + t'.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Tuple

import numpy as np

GIMBAL_TOLERANCE = 1e-12


def wrap_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]"""
    return angle - 2.0 * math.pi * math.ceil((angle - math.pi) / (2.0 * math.pi))


@dataclass(frozen=True)
class Point:
    """One LiDAR return; missing optional fields are None"""

    x: float
    y: float
    z: float
    intensity: Optional[float] = None
    ring: Optional[int] = None
    timestamp: Optional[float] = None


def _frozen(array: Optional[np.ndarray], dtype) -> Optional[np.ndarray]:
    if array is None:
        return None
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Scan:
    """
    Ordered collection of returns stored column-wise

    Attributes:
        xyz: (N, 3) positions in meters
        intensity: (N,) reflectance in [0, 255] or None when the field is missing
        ring: (N,) beam indices or None
        timestamp: (N,) seconds or None
        frame_id: frame label ("sensor", "map", ...)
        stamp: scan time in seconds
    """

    xyz: np.ndarray
    intensity: Optional[np.ndarray] = None
    ring: Optional[np.ndarray] = None
    timestamp: Optional[np.ndarray] = None
    frame_id: str = "sensor"
    stamp: float = 0.0

    def __post_init__(self):
        xyz = np.array(self.xyz, dtype=np.float64, copy=True).reshape(-1, 3)
        xyz.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "intensity", _frozen(self.intensity, np.float64))
        object.__setattr__(self, "ring", _frozen(self.ring, np.int64))
        object.__setattr__(self, "timestamp", _frozen(self.timestamp, np.float64))
        object.__setattr__(self, "stamp", float(self.stamp))

        n = xyz.shape[0]
        if not np.all(np.isfinite(xyz)):
            raise ValueError("point coordinates must be finite")
        for name in ("intensity", "ring", "timestamp"):
            column = getattr(self, name)
            if column is not None and column.shape != (n,):
                raise ValueError(f"{name} has {column.shape[0]} values for {n} points")
        if self.intensity is not None and n:
            if np.any(self.intensity < 0.0) or np.any(self.intensity > 255.0):
                raise ValueError("intensity must lie in [0, 255]")
        if self.ring is not None and n and np.any(self.ring < 0):
            raise ValueError("ring must be non-negative")
        if self.timestamp is not None and n and np.any(self.timestamp < 0.0):
            raise ValueError("timestamp must be non-negative")

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    @classmethod
    def empty(cls, frame_id: str = "sensor", stamp: float = 0.0) -> "Scan":
        return cls(np.zeros((0, 3)), frame_id=frame_id, stamp=stamp)

    @classmethod
    def from_points(cls, points: Iterable[Point], frame_id: str = "sensor", stamp: float = 0.0) -> "Scan":
        """Build a Scan from Point records; a field is kept only if every point has it"""
        points = list(points)
        xyz = np.array([[p.x, p.y, p.z] for p in points], dtype=np.float64).reshape(-1, 3)

        def column(attr):
            values = [getattr(p, attr) for p in points]
            if not values or any(v is None for v in values):
                return None
            return np.array(values)

        return cls(
            xyz,
            intensity=column("intensity"),
            ring=column("ring"),
            timestamp=column("timestamp"),
            frame_id=frame_id,
            stamp=stamp,
        )

    def points(self) -> List[Point]:
        """Row-wise view of the scan"""
        out = []
        for i in range(len(self)):
            out.append(Point(
                x=float(self.xyz[i, 0]),
                y=float(self.xyz[i, 1]),
                z=float(self.xyz[i, 2]),
                intensity=None if self.intensity is None else float(self.intensity[i]),
                ring=None if self.ring is None else int(self.ring[i]),
                timestamp=None if self.timestamp is None else float(self.timestamp[i]),
            ))
        return out

    def select(self, index) -> "Scan":
        """Subset by boolean mask or index array, keeping all fields"""

        def pick(column):
            return None if column is None else column[index]

        return Scan(
            self.xyz[index],
            intensity=pick(self.intensity),
            ring=pick(self.ring),
            timestamp=pick(self.timestamp),
            frame_id=self.frame_id,
            stamp=self.stamp,
        )

    def with_xyz(self, xyz: np.ndarray, frame_id: Optional[str] = None) -> "Scan":
        """Same attributes, new positions"""
        return Scan(
            xyz,
            intensity=self.intensity,
            ring=self.ring,
            timestamp=self.timestamp,
            frame_id=self.frame_id if frame_id is None else frame_id,
            stamp=self.stamp,
        )


def concatenate_scans(scans: List[Scan], frame_id: str = "map", stamp: float = 0.0) -> Scan:
    """Stack scans; an optional field survives only if all inputs carry it"""
    scans = [s for s in scans if not s.is_empty]
    if not scans:
        return Scan.empty(frame_id=frame_id, stamp=stamp)

    def stack(attr):
        columns = [getattr(s, attr) for s in scans]
        if any(c is None for c in columns):
            return None
        return np.concatenate(columns)

    return Scan(
        np.vstack([s.xyz for s in scans]),
        intensity=stack("intensity"),
        ring=stack("ring"),
        timestamp=stack("timestamp"),
        frame_id=frame_id,
        stamp=stamp,
    )


@dataclass(frozen=True)
class Pose6:
    """6-DOF pose vector <x, y, z, roll, pitch, yaw> (meters, radians)"""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "z", "roll", "pitch", "yaw"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"pose component {name} must be finite")
            object.__setattr__(self, name, value)

    @classmethod
    def identity(cls) -> "Pose6":
        return cls()

    @classmethod
    def from_vector(cls, vector) -> "Pose6":
        v = np.asarray(vector, dtype=np.float64).reshape(6)
        return cls(*(float(c) for c in v))

    def as_vector(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.roll, self.pitch, self.yaw])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def normalized(self) -> "Pose6":
        """Angles wrapped to (-pi, pi]"""
        return Pose6(self.x, self.y, self.z,
                     wrap_angle(self.roll), wrap_angle(self.pitch), wrap_angle(self.yaw))

    def is_close(self, other: "Pose6", translation_tol: float = 1e-9, rotation_tol: float = 1e-9) -> bool:
        """Compare translations and wrapped angle differences"""
        dt = np.abs(self.translation - other.translation)
        da = [abs(wrap_angle(a - b)) for a, b in (
            (self.roll, other.roll), (self.pitch, other.pitch), (self.yaw, other.yaw))]
        return bool(np.all(dt <= translation_tol) and max(da) <= rotation_tol)


def axis_rotations(roll: float, pitch: float, yaw: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Elementary rotations (R_x(roll), R_y(pitch), R_z(yaw))"""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    return rx, ry, rz


def to_matrix(pose: Pose6) -> Tuple[np.ndarray, np.ndarray]:
    """
    Rotation and translation of a pose

    Returns:
        (R, t) with R = R_z(yaw) R_y(pitch) R_x(roll) and t = (x, y, z)

    Example:
        >>> R, t = to_matrix(Pose6(yaw=math.pi / 2))
        >>> R @ [1, 0, 0]   # ~ (0, 1, 0)
    """
    rx, ry, rz = axis_rotations(pose.roll, pose.pitch, pose.yaw)
    return rz @ ry @ rx, pose.translation


def to_homogeneous(pose: Pose6) -> np.ndarray:
    """4x4 homogeneous form of to_matrix"""
    R, t = to_matrix(pose)
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = t
    return T


def from_matrix(R: np.ndarray, t) -> Pose6:
    """
    Extract a Pose6 from a rotation matrix and translation

    At gimbal lock (|pitch| = pi/2) only yaw - roll (or yaw + roll) is
    observable; roll is set to 0 and the whole rotation goes into yaw.
    """
    R = np.asarray(R, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64).reshape(3)
    s = -R[2, 0]
    pitch = math.asin(max(-1.0, min(1.0, s)))
    cos_pitch = math.hypot(R[2, 1], R[2, 2])
    if cos_pitch > GIMBAL_TOLERANCE:
        roll = math.atan2(R[2, 1], R[2, 2])
        yaw = math.atan2(R[1, 0], R[0, 0])
        pitch = math.atan2(s, cos_pitch)
    else:
        roll = 0.0
        pitch = math.copysign(math.pi / 2.0, s)
        yaw = math.atan2(-R[0, 1], R[1, 1])
    return Pose6(t[0], t[1], t[2], roll, pitch, yaw)


def compose(a: Pose6, b: Pose6) -> Pose6:
    """Pose of b expressed through a: T(a) @ T(b)"""
    Ra, ta = to_matrix(a)
    Rb, tb = to_matrix(b)
    return from_matrix(Ra @ Rb, Ra @ tb + ta)


def inverse(a: Pose6) -> Pose6:
    """Inverse rigid transform"""
    R, t = to_matrix(a)
    return from_matrix(R.T, -R.T @ t)


def relative(a: Pose6, b: Pose6) -> Pose6:
    """Motion taking a to b: inverse(a) composed with b"""
    return compose(inverse(a), b)


def transform_points(xyz: np.ndarray, pose: Pose6) -> np.ndarray:
    R, t = to_matrix(pose)
    return np.asarray(xyz, dtype=np.float64) @ R.T + t


def transform_scan(scan: Scan, pose: Pose6, frame_id: Optional[str] = None) -> Scan:
    """Apply x' = R x + t' to every point; other fields and order untouched"""
    return scan.with_xyz(transform_points(scan.xyz, pose), frame_id=frame_id)


def rotation_angle(R: np.ndarray) -> float:
    """Angle of a rotation matrix (radians)"""
    c = (np.trace(R) - 1.0) / 2.0
    return float(math.acos(max(-1.0, min(1.0, c))))


def pose_difference(estimate: Pose6, truth: Pose6) -> Tuple[float, float]:
    """(translation error m, rotation error rad) between two poses"""
    delta = relative(truth, estimate)
    R, t = to_matrix(delta)
    return float(np.linalg.norm(t)), rotation_angle(R)
