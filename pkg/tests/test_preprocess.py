"""
Unit tests for range gating and voxel-grid down-sampling
"""
import math
from collections import defaultdict

import numpy as np
import pytest

from lib.geometry import Scan
from lib.preprocess import (
    VoxelKey,
    occupied_voxels,
    pack_indices,
    range_filter,
    range_sweep,
    voxel_grid_filter,
    voxel_indices,
    voxel_key,
)


class TestRangeFilter:
    """Test min/max range gating"""

    def test_keeps_only_band(self):
        scan = Scan([[1, 0, 0], [0, 5, 0], [0, 0, 250]])
        out = range_filter(scan, 3.0, 200.0)
        assert np.array_equal(out.xyz, [[0, 5, 0]])

    def test_unbounded_is_identity(self, rng):
        scan = Scan(rng.normal(size=(50, 3)) * 100)
        assert np.array_equal(range_filter(scan, 0.0, math.inf).xyz, scan.xyz)

    def test_matches_brute_force(self, rng):
        xyz = rng.uniform(-30, 30, size=(2000, 3))
        out = range_filter(Scan(xyz), 5.0, 25.0)
        expected = [p for p in xyz if 5.0 <= math.sqrt(p @ p) <= 25.0]
        assert np.array_equal(out.xyz, np.array(expected))

    def test_keeps_order_and_fields(self):
        scan = Scan([[10, 0, 0], [1, 0, 0], [20, 0, 0]], ring=[2, 1, 0])
        assert list(range_filter(scan, 3, 200).ring) == [2, 0]

    def test_rejects_bad_bounds(self):
        with pytest.raises(ValueError):
            range_filter(Scan([[1, 0, 0]]), 5.0, 5.0)


class TestVoxelGridFilter:
    """Test centroid down-sampling"""

    def test_two_point_centroid(self):
        scan = Scan([[0.1, 0, 0], [0.3, 0, 0]], intensity=[10, 30])
        out = voxel_grid_filter(scan, 1.0)
        assert np.allclose(out.xyz, [[0.2, 0, 0]])
        assert out.intensity[0] == pytest.approx(20.0)

    def test_fine_leaf_is_identity_up_to_order(self, rng):
        xyz = rng.permutation(np.arange(30, dtype=float).reshape(10, 3))
        out = voxel_grid_filter(Scan(xyz), 0.5)
        assert sorted(map(tuple, out.xyz)) == sorted(map(tuple, xyz))

    def test_matches_hash_map(self, rng):
        xyz = rng.uniform(-5, 5, size=(1000, 3))
        buckets = defaultdict(list)
        for p in xyz:
            buckets[tuple(np.floor(p / 0.5).astype(int))].append(p)
        expected = sorted(tuple(np.mean(v, axis=0)) for v in buckets.values())
        out = voxel_grid_filter(Scan(xyz), 0.5)
        actual = sorted(map(tuple, out.xyz))
        assert len(actual) == len(expected)
        assert np.allclose(actual, expected, atol=1e-12)

    def test_centroids_stay_in_their_voxel(self, rng):
        xyz = rng.uniform(-20, 20, size=(3000, 3))
        out = voxel_grid_filter(Scan(xyz), 2.0)
        assert len(out) <= len(xyz)
        lower = np.floor(out.xyz / 2.0) * 2.0
        assert np.all(out.xyz >= lower) and np.all(out.xyz < lower + 2.0)

    def test_drops_ring_and_timestamp(self):
        scan = Scan([[0.1, 0, 0]], ring=[3], timestamp=[1.0])
        out = voxel_grid_filter(scan, 1.0)
        assert out.ring is None and out.timestamp is None

    def test_output_is_lexicographic(self, rng):
        out = voxel_grid_filter(Scan(rng.uniform(-10, 10, size=(500, 3))), 1.0)
        keys = [tuple(k) for k in voxel_indices(out.xyz, 1.0)]
        assert keys == sorted(keys)

    def test_empty(self):
        assert voxel_grid_filter(Scan.empty(), 1.0).is_empty


class TestVoxelIndexing:
    """Test the shared floor indexing"""

    def test_boundary_goes_up(self):
        assert voxel_key([1.0, -0.0, -1e-12], 1.0) == VoxelKey(1, 0, -1)

    def test_pack_preserves_order(self, rng):
        idx = rng.integers(-1000, 1000, size=(200, 3))
        order = np.lexsort((idx[:, 2], idx[:, 1], idx[:, 0]))
        codes = pack_indices(idx)
        assert np.all(np.diff(codes[order]) >= 0)

    def test_pack_out_of_range(self):
        assert pack_indices(np.array([[1 << 21, 0, 0]]))[0] == -1

    def test_occupied_voxels(self):
        counts = occupied_voxels(Scan([[0.1, 0.1, 0.1], [0.2, 0.2, 0.2], [1.5, 0, 0]]), 1.0)
        assert counts == {VoxelKey(0, 0, 0): 2, VoxelKey(1, 0, 0): 1}


class TestRangeSweep:
    """Test the max-range sweep table"""

    def test_counts_shrink_with_range(self, rng):
        direction = rng.normal(size=(4000, 3))
        direction /= np.linalg.norm(direction, axis=1)[:, None]
        scan = Scan(direction * rng.uniform(1, 220, size=(4000, 1)))
        df = range_sweep(scan, 2.0, [200, 100, 50, 20])
        assert list(df.columns) == ["max_range", "n_input", "n_gated", "n_filtered"]
        assert df["n_gated"].is_monotonic_decreasing
        assert (df["n_filtered"] <= df["n_gated"]).all()
