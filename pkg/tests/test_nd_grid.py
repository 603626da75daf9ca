"""
Unit tests for the ND voxel grid
"""
from collections import defaultdict

import numpy as np
import pytest

from lib.errors import EmptyCloudError
from lib.geometry import Scan
from lib.nd_grid import (
    EIGEN_ABSOLUTE_FLOOR,
    EIGEN_RATIO_FLOOR,
    build_nd_grid,
    grow_nd_grid,
    lookup_voxel,
    regularize_covariances,
    update_nd_grid,
)
from lib.preprocess import VoxelKey, occupied_voxels


def brute_force_cells(xyz, resolution):
    """Single-pass mean / population covariance per floor-indexed cell"""
    buckets = defaultdict(list)
    for p in xyz:
        buckets[tuple(int(i) for i in np.floor(p / resolution))].append(p)
    out = {}
    for key, members in buckets.items():
        pts = np.array(members)
        mean = pts.mean(axis=0)
        out[VoxelKey(*key)] = (len(pts), mean, (pts - mean).T @ (pts - mean) / len(pts))
    return out


class TestBuild:
    """Test build_nd_grid statistics"""

    def test_identical_points(self):
        grid = build_nd_grid(Scan(np.full((5, 3), 0.5)), 1.0, min_points_per_voxel=5)
        assert len(grid) == 1
        voxel = lookup_voxel(grid, VoxelKey(0, 0, 0))
        assert np.allclose(voxel.mean, [0.5, 0.5, 0.5])
        assert np.allclose(voxel.raw_covariance, 0.0)
        assert np.allclose(voxel.covariance, EIGEN_ABSOLUTE_FLOOR * np.eye(3))
        assert np.all(np.isfinite(voxel.inverse_covariance))

    def test_two_cluster_variance(self):
        xyz = np.array([[0.1, 0.5, 0.5], [0.9, 0.5, 0.5]] * 3)
        voxel = lookup_voxel(build_nd_grid(Scan(xyz), 1.0), VoxelKey(0, 0, 0))
        assert np.allclose(voxel.mean, [0.5, 0.5, 0.5])
        assert voxel.raw_covariance[0, 0] == pytest.approx(0.16, abs=1e-12)
        assert voxel.count == 6

    def test_matches_brute_force(self, rng):
        xyz = rng.uniform(-5, 5, size=(10000, 3))
        grid = build_nd_grid(Scan(xyz), 1.0)
        oracle = brute_force_cells(xyz, 1.0)
        voxels = grid.voxels
        assert set(voxels) == {k for k, (n, _, _) in oracle.items() if n >= 6}
        for key, voxel in voxels.items():
            n, mean, cov = oracle[key]
            assert voxel.count == n
            assert np.max(np.abs(voxel.mean - mean)) < 1e-10
            assert np.max(np.abs(voxel.raw_covariance - cov)) < 1e-10

    def test_sparse_cells_inactive(self):
        xyz = np.vstack([np.full((6, 3), 0.5), np.full((3, 3), 1.5)])
        grid = build_nd_grid(Scan(xyz), 1.0)
        assert len(grid) == 1
        assert grid.codes.size == 2
        assert lookup_voxel(grid, VoxelKey(1, 1, 1)) is None

    def test_lookup_agrees_with_voxel_map(self, rng):
        grid = build_nd_grid(Scan(rng.uniform(-3, 3, size=(4000, 3))), 1.0)
        voxels = grid.voxels
        for key, voxel in voxels.items():
            found = lookup_voxel(grid, key)
            assert found.key == key
            assert found.count == voxel.count
            assert np.array_equal(found.mean, voxel.mean)
        assert lookup_voxel(grid, VoxelKey(40, 40, 40)) is None
        assert lookup_voxel(grid, VoxelKey(1 << 22, 0, 0)) is None

    def test_occupied_count_matches(self, rng):
        scan = Scan(rng.normal(size=(3000, 3)) * 4)
        grid = build_nd_grid(scan, 1.0)
        assert grid.codes.size == len(occupied_voxels(scan, 1.0))

    def test_empty_reference(self):
        with pytest.raises(EmptyCloudError, match="empty reference"):
            build_nd_grid(Scan.empty(), 1.0)

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            build_nd_grid(Scan([[0, 0, 0]]), 0.0)
        with pytest.raises(ValueError):
            build_nd_grid(Scan([[0, 0, 0]]), 1.0, min_points_per_voxel=3)


class TestRegularization:
    """Test eigenvalue clamping"""

    def test_flat_covariance_is_lifted(self):
        raw = np.diag([1.0, 1.0, 0.0])[None]
        cov, inv = regularize_covariances(raw)
        w = np.linalg.eigvalsh(cov[0])
        assert w[0] == pytest.approx(EIGEN_RATIO_FLOOR)
        assert np.allclose(cov[0] @ inv[0], np.eye(3), atol=1e-9)

    def test_well_conditioned_unchanged(self, rng):
        a = rng.normal(size=(3, 3))
        raw = (a @ a.T + np.eye(3))[None]
        cov, _ = regularize_covariances(raw)
        assert np.allclose(cov, raw, atol=1e-12)


class TestLookup:
    """Test cell association"""

    def test_find(self):
        grid = build_nd_grid(Scan(np.full((6, 3), 0.5)), 1.0)
        assert list(grid.find(np.array([[0.2, 0.9, 0.1], [1.2, 0.5, 0.5]]))) == [0, -1]

    def test_neighbors27(self, rng):
        xyz = rng.uniform(0, 3, size=(5000, 3))
        grid = build_nd_grid(Scan(xyz), 1.0)
        points, cells = grid.correspondences(np.array([[1.5, 1.5, 1.5], [0.5, 0.5, 0.5]]), "neighbors27")
        assert np.sum(points == 0) == 27
        assert np.sum(points == 1) == 8
        single_points, _ = grid.correspondences(np.array([[1.5, 1.5, 1.5]]), "single")
        assert single_points.size == 1

    def test_bounds(self):
        grid = build_nd_grid(Scan(np.vstack([np.full((6, 3), 0.5), np.full((6, 3), -1.5)])), 1.0)
        low, high = grid.bounds
        assert np.array_equal(low, [-2, -2, -2])
        assert np.array_equal(high, [1, 1, 1])


class TestGrow:
    """Test incremental updates against full rebuilds"""

    def test_update_equals_rebuild(self, rng):
        base = Scan(rng.uniform(-4, 4, size=(4000, 3)))
        added = Scan(rng.uniform(-2, 6, size=(500, 3)))
        incremental = update_nd_grid(build_nd_grid(base, 1.0), added)
        rebuilt = build_nd_grid(Scan(np.vstack([base.xyz, added.xyz])), 1.0)
        assert np.array_equal(incremental.codes, rebuilt.codes)
        assert np.array_equal(incremental.counts, rebuilt.counts)
        assert np.max(np.abs(incremental.means - rebuilt.means)) < 1e-9
        assert np.max(np.abs(incremental.raw_covariances - rebuilt.raw_covariances)) < 1e-9
        assert np.array_equal(incremental.active, rebuilt.active)

    def test_small_growth_is_incremental(self, rng):
        grid = build_nd_grid(Scan(rng.uniform(-4, 4, size=(1000, 3))), 1.0)
        grown = grow_nd_grid(grid, Scan(rng.uniform(-4, 4, size=(100, 3))), rebuild_growth=0.2)
        assert grown.built_points == 1000
        assert grown.n_points == 1100

    def test_large_growth_rebuilds(self, rng):
        grid = build_nd_grid(Scan(rng.uniform(-4, 4, size=(1000, 3))), 1.0)
        grown = grow_nd_grid(grid, Scan(rng.uniform(-4, 4, size=(300, 3))), rebuild_growth=0.2)
        assert grown.built_points == 1300

    def test_original_grid_untouched(self, rng):
        grid = build_nd_grid(Scan(rng.uniform(-4, 4, size=(1000, 3))), 1.0)
        before = grid.means.copy()
        update_nd_grid(grid, Scan(rng.uniform(-4, 4, size=(100, 3))))
        assert np.array_equal(grid.means, before)
        assert grid.n_points == 1000
