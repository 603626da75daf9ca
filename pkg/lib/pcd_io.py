"""
Scan and trajectory file formats

Scans and maps use PCD (header FIELDS/SIZE/TYPE/COUNT/WIDTH/HEIGHT/POINTS/DATA)
with ``DATA ascii`` or packed little-endian ``DATA binary`` bodies.
Trajectories are CSV with header ``stamp,x,y,z,roll,pitch,yaw``.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import FormatError
from .geometry import Pose6, Scan

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

KNOWN_FIELDS = ("x", "y", "z", "intensity", "ring", "timestamp")
TRAJECTORY_COLUMNS = ["stamp", "x", "y", "z", "roll", "pitch", "yaw"]

# (TYPE, SIZE) -> numpy dtype, little-endian
PCD_TYPES = {
    ("F", 4): np.dtype("<f4"),
    ("F", 8): np.dtype("<f8"),
    ("U", 1): np.dtype("<u1"),
    ("U", 2): np.dtype("<u2"),
    ("U", 4): np.dtype("<u4"),
    ("U", 8): np.dtype("<u8"),
    ("I", 1): np.dtype("<i1"),
    ("I", 2): np.dtype("<i2"),
    ("I", 4): np.dtype("<i4"),
    ("I", 8): np.dtype("<i8"),
}

# what write_scan emits per field
FIELD_LAYOUT = {
    "x": ("F", 8),
    "y": ("F", 8),
    "z": ("F", 8),
    "intensity": ("F", 8),
    "ring": ("U", 4),
    "timestamp": ("F", 8),
}

HEADER_KEYS = ("version", "fields", "size", "type", "count", "width", "height", "viewpoint", "points", "data")


def _parse_header(lines: List[Tuple[int, str]], path: str) -> Dict:
    """Parse PCD header lines (lineno, text) into a metadata dict"""
    meta: Dict = {}
    for lineno, line in lines:
        if line.startswith("#") or not line.strip():
            continue
        parts = line.split()
        key = parts[0].lower()
        values = parts[1:]
        if key not in HEADER_KEYS:
            raise FormatError(f"malformed header: unknown entry {parts[0]!r}", path, lineno)
        try:
            if key in ("fields", "type"):
                meta[key] = values
            elif key in ("size", "count"):
                meta[key] = [int(v) for v in values]
            elif key in ("width", "height", "points"):
                meta[key] = int(values[0])
            elif key == "viewpoint":
                meta[key] = [float(v) for v in values]
            else:
                meta[key] = values[0].lower() if values else ""
        except (ValueError, IndexError):
            raise FormatError(f"malformed header: bad {parts[0]} entry", path, lineno)

    if "fields" not in meta or "data" not in meta:
        raise FormatError("malformed header: FIELDS and DATA are required", path)
    n_fields = len(meta["fields"])
    meta.setdefault("count", [1] * n_fields)
    meta.setdefault("size", [8 if t == "F" else 4 for t in meta.get("type", ["F"] * n_fields)])
    meta.setdefault("type", ["F"] * n_fields)
    for key in ("size", "type", "count"):
        if len(meta[key]) != n_fields:
            raise FormatError(f"malformed header: {key.upper()} has {len(meta[key])} entries for {n_fields} fields", path)
    if "points" not in meta:
        if "width" not in meta:
            raise FormatError("malformed header: POINTS or WIDTH required", path)
        meta["points"] = meta["width"] * meta.get("height", 1)
    if meta["data"] not in ("ascii", "binary"):
        raise FormatError(f"unsupported DATA encoding {meta['data']!r}", path)
    return meta


def _columns_to_scan(columns: Dict[str, np.ndarray], n: int, path: str) -> Scan:
    for axis in ("x", "y", "z"):
        if axis not in columns:
            raise FormatError(f"missing required field {axis!r}", path)
    xyz = np.column_stack([columns["x"], columns["y"], columns["z"]]).astype(np.float64)
    finite = np.all(np.isfinite(xyz), axis=1)
    if not np.all(finite):
        logger.warning("%s: dropping %d non-finite points", path, int(np.sum(~finite)))

    def optional(name, dtype):
        if name not in columns:
            return None
        return np.asarray(columns[name], dtype=dtype)[finite]

    return Scan(
        xyz[finite],
        intensity=optional("intensity", np.float64),
        ring=optional("ring", np.int64),
        timestamp=optional("timestamp", np.float64),
    )


def read_scan(path: PathLike) -> Scan:
    """
    Load a PCD file (ascii or binary)

    Unknown fields are skipped with a warning; missing optional fields
    (intensity, ring, timestamp) come back as None.

    Raises:
        FormatError: malformed header, field-count mismatch, non-numeric
            token (with line number) or point count mismatch.
    """
    path = Path(path)
    raw = path.read_bytes()
    spath = str(path)

    header_lines: List[Tuple[int, str]] = []
    offset = 0
    lineno = 0
    while True:
        end = raw.find(b"\n", offset)
        if end < 0:
            raise FormatError("malformed header: no DATA line", spath)
        lineno += 1
        text = raw[offset:end].decode("ascii", errors="replace").rstrip("\r")
        header_lines.append((lineno, text))
        offset = end + 1
        if text.strip().lower().startswith("data"):
            break
    meta = _parse_header(header_lines, spath)

    names = meta["fields"]
    for name in names:
        if name not in KNOWN_FIELDS:
            logger.warning("unknown PCD field %r in %s ignored", name, spath)
    n_points = meta["points"]

    if meta["data"] == "ascii":
        columns = _read_ascii_body(raw[offset:], meta, spath, lineno)
    else:
        columns = _read_binary_body(raw[offset:], meta, spath)
    scan = _columns_to_scan(columns, n_points, spath)
    stamp, frame_id = _comment_metadata(header_lines)
    return Scan(scan.xyz, intensity=scan.intensity, ring=scan.ring, timestamp=scan.timestamp,
                frame_id=frame_id, stamp=stamp)


def _comment_metadata(lines: List[Tuple[int, str]]) -> Tuple[float, str]:
    """Scan stamp and frame stored as "# STAMP <s>" / "# FRAME <id>" comments"""
    stamp, frame_id = 0.0, "sensor"
    for _, line in lines:
        parts = line.split()
        if len(parts) == 3 and parts[0] == "#":
            if parts[1] == "STAMP":
                try:
                    stamp = float(parts[2])
                except ValueError:
                    pass
            elif parts[1] == "FRAME":
                frame_id = parts[2]
    return stamp, frame_id


def _read_ascii_body(body: bytes, meta: Dict, path: str, header_length: int) -> Dict[str, np.ndarray]:
    names = meta["fields"]
    counts = meta["count"]
    width = sum(counts)
    rows = []
    for i, line in enumerate(body.decode("ascii", errors="replace").splitlines()):
        lineno = header_length + i + 1
        tokens = line.split()
        if not tokens:
            continue
        if len(tokens) != width:
            raise FormatError(f"field-count mismatch: expected {width} values, found {len(tokens)}", path, lineno)
        try:
            rows.append([float(tok) for tok in tokens])
        except ValueError:
            raise FormatError("non-numeric token", path, lineno)
    if len(rows) != meta["points"]:
        raise FormatError(f"point count mismatch: header declares {meta['points']}, file has {len(rows)}", path)

    table = np.array(rows, dtype=np.float64).reshape(len(rows), width)
    columns = {}
    start = 0
    for name, count in zip(names, counts):
        if name in KNOWN_FIELDS:
            columns[name] = table[:, start]
        start += count
    return columns


def _read_binary_body(body: bytes, meta: Dict, path: str) -> Dict[str, np.ndarray]:
    layout = []
    for index, (name, kind, size, count) in enumerate(zip(meta["fields"], meta["type"], meta["size"], meta["count"])):
        dtype = PCD_TYPES.get((kind, size))
        if dtype is None:
            raise FormatError(f"malformed header: unsupported TYPE/SIZE {kind}{size} for {name}", path)
        label = name if name not in (s[0] for s in layout) and name != "_" else f"_pad{index}"
        layout.append((label, dtype) if count == 1 else (label, dtype, (count,)))
    record = np.dtype(layout)
    n = meta["points"]
    if len(body) < n * record.itemsize:
        raise FormatError(
            f"point count mismatch: header declares {n}, body holds {len(body) // record.itemsize}", path)
    data = np.frombuffer(body, dtype=record, count=n)
    return {name: np.asarray(data[name]) for name in record.names if name in KNOWN_FIELDS}


def _present_fields(scan: Scan) -> List[str]:
    names = ["x", "y", "z"]
    for name in ("intensity", "ring", "timestamp"):
        if getattr(scan, name) is not None:
            names.append(name)
    return names


def write_scan(scan: Scan, path: PathLike, binary: bool = False) -> None:
    """
    Store a scan as PCD; only fields the scan carries are written

    ASCII floats use 9 significant digits.
    """
    path = Path(path)
    names = _present_fields(scan)
    n = len(scan)
    header = [
        "# .PCD v0.7 - Point Cloud Data file format",
        f"# STAMP {scan.stamp:.17g}",
        f"# FRAME {scan.frame_id}",
        "VERSION 0.7",
        "FIELDS " + " ".join(names),
        "SIZE " + " ".join(str(FIELD_LAYOUT[f][1]) for f in names),
        "TYPE " + " ".join(FIELD_LAYOUT[f][0] for f in names),
        "COUNT " + " ".join("1" for _ in names),
        f"WIDTH {n}",
        "HEIGHT 1",
        "VIEWPOINT 0 0 0 1 0 0 0",
        f"POINTS {n}",
        "DATA " + ("binary" if binary else "ascii"),
    ]

    columns = {"x": scan.xyz[:, 0], "y": scan.xyz[:, 1], "z": scan.xyz[:, 2]}
    for name in ("intensity", "ring", "timestamp"):
        if getattr(scan, name) is not None:
            columns[name] = getattr(scan, name)

    if binary:
        record = np.dtype([(f, PCD_TYPES[FIELD_LAYOUT[f]]) for f in names])
        body = np.empty(n, dtype=record)
        for name in names:
            body[name] = columns[name]
        with open(path, "wb") as fh:
            fh.write(("\n".join(header) + "\n").encode("ascii"))
            fh.write(body.tobytes())
        return

    formatters = ["{:d}" if f == "ring" else "{:.9g}" for f in names]
    with open(path, "w") as fh:
        fh.write("\n".join(header) + "\n")
        for i in range(n):
            fh.write(" ".join(
                fmt.format(int(columns[f][i]) if f == "ring" else float(columns[f][i]))
                for f, fmt in zip(names, formatters)
            ) + "\n")


def write_trajectory(trajectory: Sequence[Tuple[float, Pose6]], path: PathLike) -> None:
    """CSV ``stamp,x,y,z,roll,pitch,yaw``; 17 significant digits so reads are exact"""
    rows = [[stamp, p.x, p.y, p.z, p.roll, p.pitch, p.yaw] for stamp, p in trajectory]
    df = pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)
    df.to_csv(path, index=False, float_format="%.17g")


def read_trajectory(path: PathLike) -> List[Tuple[float, Pose6]]:
    """
    Read a trajectory CSV

    Raises:
        FormatError naming the first missing column.
    """
    df = pd.read_csv(path, float_precision="round_trip")
    for column in TRAJECTORY_COLUMNS:
        if column not in df.columns:
            raise FormatError(f"missing column {column!r}", str(path))
    out = []
    for row in df[TRAJECTORY_COLUMNS].itertuples(index=False):
        out.append((float(row.stamp), Pose6(row.x, row.y, row.z, row.roll, row.pitch, row.yaw)))
    return out


def list_scan_files(source: Union[PathLike, Sequence[PathLike]]) -> List[Path]:
    """
    Resolve a directory (sorted *.pcd) or an explicit list of scan files

    A text file ending in .txt/.lst is read as one path per line.
    """
    if isinstance(source, (str, Path)):
        source = Path(source)
        if source.is_dir():
            return sorted(source.glob("*.pcd"))
        if source.suffix in (".txt", ".lst"):
            base = source.parent
            entries = [ln.strip() for ln in source.read_text().splitlines() if ln.strip()]
            return [Path(e) if Path(e).is_absolute() else base / e for e in entries]
        return [source]
    return [Path(p) for p in source]
