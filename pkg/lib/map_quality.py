"""
Map quality: mean map entropy and mean plane variance

For every map point the neighbourhood within ``radius`` (query point
included) gives
    entropy         h = 1/2 ln((2 pi e)^3 det C)
    plane variance  v = 75th percentile of |distance to the fitted plane|
Points with fewer than 5 neighbours (or det C <= 1e-30 for the entropy)
are undefined (NaN) and left out of the means.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .errors import DegenerateMapError, EmptyCloudError
from .geometry import Scan

logger = logging.getLogger(__name__)

MIN_NEIGHBORS = 5
DET_FLOOR = 1e-30
UPPER_QUARTILE = 0.75
CHUNK_SIZE = 4096
ENTROPY_CONSTANT = 3.0 * math.log(2.0 * math.pi * math.e)


@dataclass(frozen=True, eq=False)
class MapQualityReport:
    """
    Attributes:
        mme: mean entropy over defined points (nats, may be negative)
        mpv: mean plane variance over defined points (m)
        per_point_entropy: (N,) with NaN where undefined
        per_point_plane_variance: (N,) with NaN where undefined
        radius: neighbourhood radius (m)
        skipped_points: points with undefined entropy
        skipped_plane_points: points with undefined plane variance
    """

    mme: float
    mpv: float
    per_point_entropy: np.ndarray
    per_point_plane_variance: np.ndarray
    radius: float
    skipped_points: int
    skipped_plane_points: int

    @property
    def n_points(self) -> int:
        return self.per_point_entropy.shape[0]


def _neighbourhood_statistics(xyz: np.ndarray, tree: cKDTree, queries: np.ndarray, radius: float
                              ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Entropy and plane variance for the query indices

    Neighbour offsets are taken relative to the query point before the
    covariance is formed.
    """
    neighbours = tree.query_ball_point(xyz[queries], r=radius)
    counts = np.fromiter((len(n) for n in neighbours), dtype=np.int64, count=len(neighbours))
    k = queries.shape[0]
    entropy = np.full(k, np.nan)
    plane = np.full(k, np.nan)
    defined = counts >= MIN_NEIGHBORS
    if not np.any(defined):
        return entropy, plane

    rows = np.flatnonzero(defined)
    counts_d = counts[rows]
    flat = np.concatenate([np.asarray(neighbours[r], dtype=np.int64) for r in rows])
    owner = np.repeat(np.arange(rows.size), counts_d)
    local = xyz[flat] - xyz[queries[rows]][owner]

    n = counts_d.astype(np.float64)
    mean = np.column_stack([np.bincount(owner, weights=local[:, a], minlength=rows.size) for a in range(3)]) / n[:, None]
    centred = local - mean[owner]
    cov = np.empty((rows.size, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            s = np.bincount(owner, weights=centred[:, a] * centred[:, b], minlength=rows.size) / n
            cov[:, a, b] = s
            cov[:, b, a] = s

    det = np.linalg.det(cov)
    ok = det > DET_FLOOR
    h = np.full(rows.size, np.nan)
    h[ok] = 0.5 * (ENTROPY_CONSTANT + np.log(det[ok]))
    entropy[rows] = h

    _, vectors = np.linalg.eigh(cov)
    normal = vectors[:, :, 0]
    distance = np.abs(np.einsum("mi,mi->m", centred, normal[owner]))
    order = np.lexsort((distance, owner))
    distance = distance[order]
    start = np.concatenate([[0], np.cumsum(counts_d)[:-1]])
    position = UPPER_QUARTILE * (counts_d - 1)
    lower = np.floor(position).astype(np.int64)
    upper = np.minimum(lower + 1, counts_d - 1)
    fraction = position - lower
    low_value = distance[start + lower]
    plane[rows] = low_value + fraction * (distance[start + upper] - low_value)
    return entropy, plane


def _chunks(n: int):
    return [np.arange(s, min(s + CHUNK_SIZE, n)) for s in range(0, n, CHUNK_SIZE)]


def per_point_quality(map_cloud: Scan, radius: float, threads: int = 1,
                      tree: Optional[cKDTree] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Entropy and plane variance of every map point, NaN where undefined"""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    xyz = map_cloud.xyz
    if tree is None:
        tree = cKDTree(xyz)
    chunks = _chunks(xyz.shape[0])
    workers = max(1, min(threads, len(chunks)))
    if workers == 1:
        parts = [_neighbourhood_statistics(xyz, tree, c, radius) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            parts = list(executor.map(lambda c: _neighbourhood_statistics(xyz, tree, c, radius), chunks))
    if not parts:
        return np.zeros(0), np.zeros(0)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def point_entropy(map_cloud: Scan, index: int, radius: float) -> float:
    """
    Differential entropy of the neighbourhood of one map point

    Returns NaN when fewer than 5 neighbours or det C <= 1e-30.

    Example:
        >>> point_entropy(room_map, 0, radius=1.0)
        -4.12
    """
    if radius <= 0:
        raise ValueError("radius must be > 0")
    entropy, _ = _neighbourhood_statistics(map_cloud.xyz, cKDTree(map_cloud.xyz), np.array([index]), radius)
    return float(entropy[0])


def point_plane_variance(map_cloud: Scan, index: int, radius: float) -> float:
    """Upper quartile of point-to-plane distances (NaN below 5 neighbours)"""
    if radius <= 0:
        raise ValueError("radius must be > 0")
    _, plane = _neighbourhood_statistics(map_cloud.xyz, cKDTree(map_cloud.xyz), np.array([index]), radius)
    return float(plane[0])


def map_quality(map_cloud: Scan, radius: float = 1.0, threads: int = 1) -> MapQualityReport:
    """
    Mean map entropy and mean plane variance

    Raises:
        EmptyCloudError: map has no points
        DegenerateMapError: no point has either statistic defined
    """
    if map_cloud.is_empty:
        raise EmptyCloudError("empty map")
    entropy, plane = per_point_quality(map_cloud, radius, threads)
    entropy_ok = np.isfinite(entropy)
    plane_ok = np.isfinite(plane)
    if not np.any(entropy_ok) and not np.any(plane_ok):
        raise DegenerateMapError("degenerate map: no point has 5 neighbours within the radius")
    if not np.any(entropy_ok):
        logger.warning("entropy undefined at every point (flat neighbourhoods); mme is NaN")

    mme = float(np.mean(entropy[entropy_ok])) if np.any(entropy_ok) else math.nan
    mpv = float(np.mean(plane[plane_ok])) if np.any(plane_ok) else math.nan
    report = MapQualityReport(
        mme=mme,
        mpv=mpv,
        per_point_entropy=entropy,
        per_point_plane_variance=plane,
        radius=float(radius),
        skipped_points=int(np.sum(~entropy_ok)),
        skipped_plane_points=int(np.sum(~plane_ok)),
    )
    logger.info("map quality over %d points: mme=%.6f mpv=%.6f (%d skipped)",
                report.n_points, mme, mpv, report.skipped_points)
    return report


def export_point_quality(map_cloud: Scan, report: MapQualityReport, path: Union[str, Path]) -> None:
    """CSV x,y,z,entropy,plane_variance with ``nan`` for undefined values"""
    df = pd.DataFrame({
        "x": map_cloud.xyz[:, 0],
        "y": map_cloud.xyz[:, 1],
        "z": map_cloud.xyz[:, 2],
        "entropy": report.per_point_entropy,
        "plane_variance": report.per_point_plane_variance,
    })
    df.to_csv(path, index=False, na_rep="nan", float_format="%.9g")
