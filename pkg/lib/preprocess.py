"""
Input-cloud preprocessing: range gating and voxel-grid down-sampling

Voxel indexing is shared with the ND grid: key = floor(coordinate / leaf)
per axis, so the cell [0, leaf) is index 0 and a point sitting exactly on
a boundary belongs to the higher-index cell.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Tuple

import numpy as np
import pandas as pd

from .geometry import Scan

# packed key layout: 21 bits per axis, offset so negative indices stay positive
KEY_BITS = 21
KEY_OFFSET = 1 << (KEY_BITS - 1)
KEY_LIMIT = KEY_OFFSET - 1


@dataclass(frozen=True, order=True)
class VoxelKey:
    """Signed integer grid index of a voxel"""

    ix: int
    iy: int
    iz: int

    def as_tuple(self) -> Tuple[int, int, int]:
        return (self.ix, self.iy, self.iz)


def voxel_indices(xyz: np.ndarray, leaf_size: float) -> np.ndarray:
    """(N, 3) int64 floor indices; the single definition used project-wide"""
    return np.floor(np.asarray(xyz, dtype=np.float64) / leaf_size).astype(np.int64)


def voxel_key(point, leaf_size: float) -> VoxelKey:
    ix, iy, iz = voxel_indices(np.asarray(point).reshape(1, 3), leaf_size)[0]
    return VoxelKey(int(ix), int(iy), int(iz))


def pack_indices(indices: np.ndarray) -> np.ndarray:
    """
    Pack (N, 3) voxel indices into sortable int64 codes

    Lexicographic order of (ix, iy, iz) equals numeric order of the codes.
    Indices outside +-KEY_LIMIT map to -1 (treated as "no voxel").
    """
    indices = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
    inside = np.all(np.abs(indices) <= KEY_LIMIT, axis=1)
    shifted = indices + KEY_OFFSET
    codes = (shifted[:, 0] << (2 * KEY_BITS)) | (shifted[:, 1] << KEY_BITS) | shifted[:, 2]
    return np.where(inside, codes, -1)


def range_filter(scan: Scan, min_range: float, max_range: float) -> Scan:
    """
    Keep points with min_range <= ||(x, y, z)|| <= max_range

    Distances are measured from the scan origin, so this must run in the
    sensor frame, before any map-frame transform.
    """
    if not 0.0 <= min_range < max_range:
        raise ValueError(f"need 0 <= min_range < max_range (got {min_range}, {max_range})")
    if scan.is_empty:
        return scan
    r = np.linalg.norm(scan.xyz, axis=1)
    return scan.select((r >= min_range) & (r <= max_range))


def voxel_grid_filter(scan: Scan, leaf_size: float) -> Scan:
    """
    Replace the points of each occupied voxel by their centroid

    x, y, z and intensity are averaged; ring and timestamp are dropped
    because a centroid does not belong to any single beam. Output is
    ordered by ascending (ix, iy, iz).

    Example:
        >>> scan = Scan([[0.1, 0, 0], [0.3, 0, 0]], intensity=[10, 30])
        >>> voxel_grid_filter(scan, 1.0).xyz     # [[0.2, 0, 0]]
    """
    if leaf_size <= 0:
        raise ValueError("leaf_size must be > 0")
    if scan.is_empty:
        return Scan.empty(frame_id=scan.frame_id, stamp=scan.stamp)

    # row-wise unique is lexicographic and has no packing limit
    cells, inverse = np.unique(voxel_indices(scan.xyz, leaf_size), axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n_cells = cells.shape[0]
    counts = np.bincount(inverse, minlength=n_cells).astype(np.float64)

    centroids = np.column_stack([
        np.bincount(inverse, weights=scan.xyz[:, axis], minlength=n_cells) / counts
        for axis in range(3)
    ])
    intensity = None
    if scan.intensity is not None:
        intensity = np.bincount(inverse, weights=scan.intensity, minlength=n_cells) / counts

    return Scan(centroids, intensity=intensity, frame_id=scan.frame_id, stamp=scan.stamp)


def occupied_voxels(scan: Scan, leaf_size: float) -> Dict[VoxelKey, int]:
    """Point count per occupied voxel"""
    if scan.is_empty:
        return {}
    keys, counts = np.unique(voxel_indices(scan.xyz, leaf_size), axis=0, return_counts=True)
    return {VoxelKey(int(k[0]), int(k[1]), int(k[2])): int(c) for k, c in zip(keys, counts)}


def preprocess_scan(scan: Scan, min_range: float, max_range: float, leaf_size: float) -> Tuple[Scan, Scan]:
    """Range gate then voxel filter; returns (gated, down-sampled)"""
    gated = range_filter(scan, min_range, max_range)
    return gated, voxel_grid_filter(gated, leaf_size)


def range_sweep(
    scan: Scan,
    leaf_size: float,
    max_ranges: Iterable[float],
    min_range: float = 0.0,
) -> pd.DataFrame:
    """
    Point counts after gating to each maximum range and voxel filtering

    Returns:
        DataFrame with columns max_range, n_input, n_gated, n_filtered
    """
    rows: List[Dict] = []
    for max_range in max_ranges:
        gated, filtered = preprocess_scan(scan, min_range, float(max_range), leaf_size)
        rows.append({
            "max_range": float(max_range),
            "n_input": len(scan),
            "n_gated": len(gated),
            "n_filtered": len(filtered),
        })
    return pd.DataFrame(rows, columns=["max_range", "n_input", "n_gated", "n_filtered"])
