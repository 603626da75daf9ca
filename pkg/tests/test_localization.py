"""
Unit tests for frame-by-frame localization against a fixed map
"""
import logging

import numpy as np
import pytest

from lib.errors import EmptyCloudError
from lib.geometry import Pose6, Scan, pose_difference
from lib.localization import localize_sequence, localize_step, localizer_from_grid, localizer_init
from lib.run_config import RunConfig
from lib.simulator import get_preset, simulate_scan

# room planes sit on voxel borders in world coordinates; the map is shifted by this
MAP_SHIFT = Pose6(0.37, 0.23, 0.41)
WORLD_POSE = Pose6(0.8, -0.5, 1.0, 0.0, 0.0, 0.2)
CONFIG = RunConfig(voxel_leaf_size=0.5)


@pytest.fixture(scope="module")
def map_cloud(room_cloud):
    return Scan(room_cloud.xyz + MAP_SHIFT.translation, frame_id="map")


@pytest.fixture(scope="module")
def truth():
    return Pose6(*(WORLD_POSE.translation + MAP_SHIFT.translation), WORLD_POSE.roll, WORLD_POSE.pitch,
                 WORLD_POSE.yaw)


@pytest.fixture(scope="module")
def scan(room):
    return simulate_scan(room, get_preset("VLP-16"), WORLD_POSE, seed=3, stamp=1.0)


@pytest.fixture(scope="module")
def shared_grid(map_cloud):
    return localizer_init(map_cloud, Pose6(), CONFIG).nd_grid


class TestLocalizerInit:
    """Test localizer set-up"""

    def test_identity_start(self, map_cloud):
        state = localizer_init(map_cloud, Pose6(), CONFIG)
        assert state.current_pose == Pose6()
        assert state.history == []
        assert state.nd_grid.n_points == len(map_cloud)

    def test_empty_map(self):
        with pytest.raises(EmptyCloudError, match="empty map"):
            localizer_init(Scan.empty(), Pose6(), CONFIG)


class TestLocalizeStep:
    """Test one localization cycle"""

    def test_scan_at_current_pose(self, shared_grid, scan, truth):
        state = localizer_from_grid(shared_grid, truth)
        state, result = localize_step(state, scan, CONFIG)
        dt, dr = pose_difference(result.pose, truth)
        assert result.converged
        assert result.iterations <= 3
        assert dt < 0.02
        assert dr < 0.005
        assert result.wall_ms > 0.0
        assert state.trajectory == [(1.0, result.pose)]

    def test_recovers_small_offset(self, shared_grid, scan, truth):
        start = Pose6(truth.x - 0.3, truth.y + 0.2, truth.z, 0.0, 0.0, truth.yaw - 0.03)
        state, result = localize_step(localizer_from_grid(shared_grid, start), scan, CONFIG)
        dt, _ = pose_difference(result.pose, truth)
        assert not result.rejected
        assert dt < 0.02

    def test_empty_region_holds_pose(self, shared_grid, truth, caplog):
        far = Scan(np.array([80.0, 80.0, 0.0]) + np.random.default_rng(2).normal(0, 0.5, size=(300, 3)))
        state = localizer_from_grid(shared_grid, truth)
        with caplog.at_level(logging.WARNING):
            state, result = localize_step(state, far, CONFIG)
        assert "alignment breakdown" in caplog.text
        assert result.breakdown and result.rejected
        assert state.current_pose == truth
        assert state.rejected_count == 1

    def test_error_gate_rejects_jump(self, shared_grid, scan, truth, caplog):
        start = Pose6(truth.x - 0.5, truth.y, truth.z, 0.0, 0.0, truth.yaw)
        config = CONFIG.with_overrides(error_threshold=0.1)
        state = localizer_from_grid(shared_grid, start)
        with caplog.at_level(logging.WARNING):
            state, result = localize_step(state, scan, config)
        assert "scan rejected by error gate" in caplog.text
        assert result.rejected and not result.breakdown
        assert result.pose == start
        assert state.trajectory[-1][1] == start
        assert state.previous_delta == Pose6()


class TestSequence:
    """Test chained cycles"""

    def test_stationary_scans_settle(self, shared_grid, scan, truth):
        state = localize_sequence(localizer_from_grid(shared_grid, truth), [scan] * 10, CONFIG)
        assert len(state.history) == 10
        assert state.rejected_count == 0
        assert state.previous_delta.is_close(Pose6(), 1e-3, 1e-3)
        iterations = [r.iterations for r in state.history]
        assert iterations[-1] <= iterations[0]
        assert iterations[-1] == min(iterations)

    def test_streams_share_grid(self, shared_grid, scan, truth):
        a = localizer_from_grid(shared_grid, truth)
        b = localizer_from_grid(shared_grid, truth)
        localize_step(a, scan, CONFIG)
        assert b.history == []
        assert a.nd_grid is b.nd_grid

    def test_grid_unchanged_by_many_steps(self, shared_grid, scan, truth):
        names = ("codes", "indices", "counts", "sums", "scatter", "means", "covariances",
                 "inverse_covariances", "active", "points")
        before = {name: getattr(shared_grid, name).tobytes() for name in names}
        offsets = np.random.default_rng(12).normal(0.0, 0.1, size=(25, 3))
        for dx, dy, dyaw in offsets:
            start = Pose6(truth.x + dx, truth.y + dy, truth.z, 0.0, 0.0, truth.yaw + 0.1 * dyaw)
            localize_sequence(localizer_from_grid(shared_grid, start), [scan] * 2, CONFIG)
        assert {name: getattr(shared_grid, name).tobytes() for name in names} == before
        assert not shared_grid.means.flags.writeable

    def test_repeat_runs_are_identical(self, shared_grid, scan, truth):
        start = Pose6(truth.x - 0.2, truth.y + 0.1, truth.z, 0.0, 0.0, truth.yaw)
        runs = [localize_sequence(localizer_from_grid(shared_grid, start), [scan] * 4, CONFIG) for _ in range(2)]
        assert runs[0].trajectory == runs[1].trajectory
        strip = [[r.flagged(wall_ms=0.0) for r in run.history] for run in runs]
        assert strip[0] == strip[1]


class TestDefaultLeaf:
    """Test localization with the published 2 m input leaf"""

    def test_tracks_scan_at_default_leaf(self, shared_grid, scan, truth):
        config = RunConfig()
        assert config.voxel_leaf_size == 2.0
        start = Pose6(truth.x - 0.1, truth.y + 0.05, truth.z, 0.0, 0.0, truth.yaw)
        state = localize_sequence(localizer_from_grid(shared_grid, start), [scan] * 3, config)
        assert state.rejected_count == 0
        dt, dr = pose_difference(state.current_pose, truth)
        assert dt < 0.25
        assert dr < 0.05
