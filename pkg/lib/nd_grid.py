"""
ND voxel grid: per-cell Gaussian statistics of a reference cloud

Every occupied cell keeps its sufficient statistics (count, coordinate sum,
centred scatter matrix) so the grid can be grown incrementally; only cells
with at least ``min_points`` points carry a distribution used for matching.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloudError
from .geometry import Scan
from .preprocess import VoxelKey, pack_indices, voxel_indices

logger = logging.getLogger(__name__)

EIGEN_RATIO_FLOOR = 1e-3
# absolute floor (m^2) for cells whose points coincide
EIGEN_ABSOLUTE_FLOOR = 1e-6
DEFAULT_MIN_POINTS = 6

NEIGHBOR_OFFSETS = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
    dtype=np.int64,
)


@dataclass(frozen=True)
class NDVoxel:
    """One normal distribution cell"""

    key: VoxelKey
    mean: np.ndarray
    covariance: np.ndarray
    raw_covariance: np.ndarray
    inverse_covariance: np.ndarray
    count: int


def regularize_covariances(raw: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Clamp eigenvalues below 1e-3 * lambda_max up to that floor

    Args:
        raw: (K, 3, 3) symmetric covariances

    Returns:
        (covariances, inverse_covariances), both (K, 3, 3)
    """
    raw = 0.5 * (raw + np.swapaxes(raw, 1, 2))
    w, v = np.linalg.eigh(raw)
    floor = np.maximum(EIGEN_RATIO_FLOOR * w[:, -1], EIGEN_ABSOLUTE_FLOOR)
    w = np.maximum(w, floor[:, None])
    vt = np.swapaxes(v, 1, 2)
    cov = v @ (w[:, :, None] * vt)
    inv = v @ ((1.0 / w)[:, :, None] * vt)
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    inv = 0.5 * (inv + np.swapaxes(inv, 1, 2))
    return cov, inv


def _readonly(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True, eq=False)
class NDVoxelGrid:
    """
    Immutable sparse grid of ND voxels over a reference cloud

    All occupied cells are stored (sorted by packed key); ``active`` marks
    cells with a distribution (count >= min_points).
    """

    resolution: float
    min_points: int
    codes: np.ndarray          # (K,) packed keys, ascending
    indices: np.ndarray        # (K, 3) voxel indices
    counts: np.ndarray         # (K,)
    sums: np.ndarray           # (K, 3)
    scatter: np.ndarray        # (K, 3, 3) sum of centred outer products
    means: np.ndarray          # (K, 3)
    raw_covariances: np.ndarray
    covariances: np.ndarray
    inverse_covariances: np.ndarray
    active: np.ndarray         # (K,) bool
    points: np.ndarray         # (M, 3) reference points (map frame)
    built_points: int          # reference size at the last full rebuild

    def __len__(self) -> int:
        return int(np.count_nonzero(self.active))

    @property
    def is_empty(self) -> bool:
        return len(self) == 0

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def bounds(self) -> Tuple[np.ndarray, np.ndarray]:
        """Axis-aligned box covering all active cells"""
        if self.is_empty:
            return np.zeros(3), np.zeros(3)
        idx = self.indices[self.active]
        return idx.min(axis=0) * self.resolution, (idx.max(axis=0) + 1) * self.resolution

    @cached_property
    def _active_lookup(self) -> Tuple[np.ndarray, np.ndarray]:
        where = np.flatnonzero(self.active)
        return self.codes[where], where

    @cached_property
    def kdtree(self) -> cKDTree:
        """Nearest-neighbour index over the reference points, built once"""
        return cKDTree(self.points)

    def _voxel(self, k: int) -> NDVoxel:
        return NDVoxel(
            key=VoxelKey(*(int(i) for i in self.indices[k])),
            mean=self.means[k],
            covariance=self.covariances[k],
            raw_covariance=self.raw_covariances[k],
            inverse_covariance=self.inverse_covariances[k],
            count=int(self.counts[k]),
        )

    @property
    def voxels(self) -> Dict[VoxelKey, NDVoxel]:
        """Active cells as a VoxelKey -> NDVoxel mapping"""
        return {voxel.key: voxel for voxel in map(self._voxel, np.flatnonzero(self.active))}

    def find(self, xyz: np.ndarray) -> np.ndarray:
        """Index of the active cell containing each point, -1 when none"""
        return self._find_codes(pack_indices(voxel_indices(xyz, self.resolution)))

    def _find_codes(self, codes: np.ndarray) -> np.ndarray:
        active_codes, where = self._active_lookup
        if active_codes.size == 0:
            return np.full(codes.shape[0], -1, dtype=np.int64)
        pos = np.searchsorted(active_codes, codes)
        pos_clipped = np.minimum(pos, active_codes.size - 1)
        hit = (codes >= 0) & (active_codes[pos_clipped] == codes)
        return np.where(hit, where[pos_clipped], -1)

    def correspondences(self, xyz: np.ndarray, neighbor_search: str = "single") -> Tuple[np.ndarray, np.ndarray]:
        """
        (point_index, cell_index) pairs used by the score

        ``single`` pairs each point with the cell containing it;
        ``neighbors27`` pairs it with every active cell of the 3x3x3 block.
        """
        base = voxel_indices(xyz, self.resolution)
        if neighbor_search == "single":
            cell = self._find_codes(pack_indices(base))
            points = np.flatnonzero(cell >= 0)
            return points, cell[points]

        point_parts, cell_parts = [], []
        for offset in NEIGHBOR_OFFSETS:
            cell = self._find_codes(pack_indices(base + offset))
            points = np.flatnonzero(cell >= 0)
            point_parts.append(points)
            cell_parts.append(cell[points])
        points = np.concatenate(point_parts)
        cells = np.concatenate(cell_parts)
        order = np.lexsort((cells, points))
        return points[order], cells[order]


def _finalize(
    resolution: float,
    min_points: int,
    codes: np.ndarray,
    counts: np.ndarray,
    sums: np.ndarray,
    scatter: np.ndarray,
    points: np.ndarray,
    built_points: int,
) -> NDVoxelGrid:
    shifted = np.stack([(codes >> 42) & 0x1FFFFF, (codes >> 21) & 0x1FFFFF, codes & 0x1FFFFF], axis=1)
    indices = shifted - (1 << 20)
    means = sums / counts[:, None]
    raw = scatter / counts[:, None, None]
    active = counts >= min_points
    cov = np.zeros_like(raw)
    inv = np.zeros_like(raw)
    if np.any(active):
        cov[active], inv[active] = regularize_covariances(raw[active])
    points = np.array(points, dtype=np.float64)
    _readonly(codes, indices, counts, sums, scatter, means, raw, cov, inv, active, points)
    return NDVoxelGrid(
        resolution=float(resolution),
        min_points=int(min_points),
        codes=codes,
        indices=indices,
        counts=counts,
        sums=sums,
        scatter=scatter,
        means=means,
        raw_covariances=raw,
        covariances=cov,
        inverse_covariances=inv,
        active=active,
        points=points,
        built_points=int(built_points),
    )


def _cell_statistics(xyz: np.ndarray, resolution: float):
    """Two-pass per-cell count, sum and centred scatter"""
    codes = pack_indices(voxel_indices(xyz, resolution))
    inside = codes >= 0
    if not np.all(inside):
        logger.warning("dropping %d points outside the addressable grid", int(np.sum(~inside)))
        xyz, codes = xyz[inside], codes[inside]
    unique_codes, inverse = np.unique(codes, return_inverse=True)
    inverse = inverse.reshape(-1)
    k = unique_codes.shape[0]
    counts = np.bincount(inverse, minlength=k).astype(np.float64)
    sums = np.column_stack([np.bincount(inverse, weights=xyz[:, a], minlength=k) for a in range(3)])
    centred = xyz - (sums / counts[:, None])[inverse]
    scatter = np.empty((k, 3, 3))
    for a in range(3):
        for b in range(a, 3):
            s = np.bincount(inverse, weights=centred[:, a] * centred[:, b], minlength=k)
            scatter[:, a, b] = s
            scatter[:, b, a] = s
    return unique_codes, counts, sums, scatter


def build_nd_grid(reference: Scan, resolution: float, min_points_per_voxel: int = DEFAULT_MIN_POINTS) -> NDVoxelGrid:
    """
    Build the ND voxel representation of a reference cloud

    Mean and population covariance (divisor M_k) per cell; cells with
    fewer than ``min_points_per_voxel`` points carry no distribution.

    Raises:
        EmptyCloudError: "empty reference"
    """
    if resolution <= 0:
        raise ValueError("resolution must be > 0")
    if min_points_per_voxel < 4:
        raise ValueError("min_points_per_voxel must be >= 4")
    if reference.is_empty:
        raise EmptyCloudError("empty reference")

    codes, counts, sums, scatter = _cell_statistics(reference.xyz, resolution)
    grid = _finalize(resolution, min_points_per_voxel, codes, counts, sums, scatter,
                     reference.xyz, reference.xyz.shape[0])
    logger.debug("built ND grid: %d occupied cells, %d active, %d points",
                 codes.size, len(grid), reference.xyz.shape[0])
    return grid


def update_nd_grid(grid: NDVoxelGrid, added: Scan) -> NDVoxelGrid:
    """
    Merge new map-frame points into a grid without a full rebuild

    Cell statistics are combined pairwise (count, mean, centred scatter),
    which equals a rebuild over the union up to rounding.
    """
    if added.is_empty:
        return grid
    new_codes, new_counts, new_sums, new_scatter = _cell_statistics(added.xyz, grid.resolution)

    codes = np.union1d(grid.codes, new_codes)
    k = codes.size
    counts = np.zeros(k)
    sums = np.zeros((k, 3))
    scatter = np.zeros((k, 3, 3))

    old_at = np.searchsorted(codes, grid.codes)
    counts[old_at] = grid.counts
    sums[old_at] = grid.sums
    scatter[old_at] = grid.scatter

    new_at = np.searchsorted(codes, new_codes)
    n_a = counts[new_at]
    n_b = new_counts
    n = n_a + n_b
    mean_a = np.divide(sums[new_at], n_a[:, None], out=np.zeros_like(new_sums), where=n_a[:, None] > 0)
    mean_b = new_sums / n_b[:, None]
    delta = mean_b - mean_a
    weight = n_a * n_b / n
    scatter[new_at] = scatter[new_at] + new_scatter + weight[:, None, None] * delta[:, :, None] * delta[:, None, :]
    sums[new_at] = sums[new_at] + new_sums
    counts[new_at] = n

    points = np.vstack([grid.points, added.xyz])
    return _finalize(grid.resolution, grid.min_points, codes, counts, sums, scatter, points, grid.built_points)


def rebuild_nd_grid(grid: NDVoxelGrid) -> NDVoxelGrid:
    """Full two-pass rebuild over the grid's reference points"""
    return build_nd_grid(Scan(grid.points), grid.resolution, grid.min_points)


def grow_nd_grid(grid: NDVoxelGrid, added: Scan, rebuild_growth: float = 0.2) -> NDVoxelGrid:
    """
    Add points, rebuilding fully once the reference grew by more than
    ``rebuild_growth`` (fraction) since the last full build
    """
    total = grid.n_points + len(added)
    if grid.built_points == 0 or (total - grid.built_points) / grid.built_points > rebuild_growth:
        return build_nd_grid(Scan(np.vstack([grid.points, added.xyz])), grid.resolution, grid.min_points)
    return update_nd_grid(grid, added)


def lookup_voxel(grid: NDVoxelGrid, key: VoxelKey) -> Optional[NDVoxel]:
    """Active cell at ``key``, None when the cell carries no distribution"""
    k = int(grid._find_codes(pack_indices(np.array([key.as_tuple()])))[0])
    return None if k < 0 else grid._voxel(k)
