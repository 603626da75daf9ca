"""
Frame-by-frame localization against a fixed reference map

The solution of each cycle seeds the next one. A solution whose jump from
the current pose exceeds ``error_threshold`` plus the predicted motion is
rejected and the pose is held.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, List, Tuple

import numpy as np

from .errors import EmptyCloudError, OptimizationBreakdown
from .geometry import Pose6, Scan, relative
from .mapping import initial_guess
from .nd_grid import NDVoxelGrid, build_nd_grid
from .ndt import RegistrationResult, newton_align
from .preprocess import preprocess_scan
from .run_config import RunConfig

logger = logging.getLogger(__name__)


@dataclass
class LocalizerState:
    """Grid is shared read-only; everything else belongs to one scan stream"""

    nd_grid: NDVoxelGrid
    current_pose: Pose6
    previous_delta: Pose6 = field(default_factory=Pose6.identity)
    history: List[RegistrationResult] = field(default_factory=list)
    trajectory: List[Tuple[float, Pose6]] = field(default_factory=list)

    @property
    def rejected_count(self) -> int:
        return sum(1 for r in self.history if r.rejected)


def localizer_init(map_cloud: Scan, initial_pose: Pose6, config: RunConfig) -> LocalizerState:
    """
    Build the reference grid at ``config.ndt_resolution``

    Raises:
        EmptyCloudError: "empty map"
    """
    if map_cloud.is_empty:
        raise EmptyCloudError("empty map")
    grid = build_nd_grid(map_cloud, config.ndt_resolution, config.min_points_per_voxel)
    logger.info("localizer ready: %d map points, %d ND voxels", len(map_cloud), len(grid))
    return LocalizerState(nd_grid=grid, current_pose=initial_pose)


def localizer_from_grid(grid: NDVoxelGrid, initial_pose: Pose6) -> LocalizerState:
    """Another stream over an already built grid"""
    return LocalizerState(nd_grid=grid, current_pose=initial_pose)


def _hold(state: LocalizerState, scan: Scan, result: RegistrationResult) -> RegistrationResult:
    state.history.append(result)
    state.trajectory.append((scan.stamp, state.current_pose))
    return result


def localize_step(state: LocalizerState, scan: Scan, config: RunConfig) -> Tuple[LocalizerState, RegistrationResult]:
    """
    Align one scan; gate, then advance or hold the pose

    The scan is range gated to [loc_min_range, max_range] and voxel
    filtered at ``voxel_leaf_size``. Wall time covers filtering and
    alignment.
    """
    started = time.perf_counter()
    index = len(state.history)
    _, filtered = preprocess_scan(scan, config.loc_min_range, config.max_range, config.voxel_leaf_size)
    guess = initial_guess(state.current_pose, state.previous_delta, config.initial_guess)

    def elapsed() -> float:
        return (time.perf_counter() - started) * 1e3

    try:
        result = newton_align(state.nd_grid, filtered, guess, config)
    except OptimizationBreakdown as exc:
        logger.warning("alignment breakdown at scan %d: %s; pose held", index, exc)
        held = exc.result.flagged(pose=state.current_pose, breakdown=True, rejected=True, wall_ms=elapsed())
        return state, _hold(state, scan, held)
    except EmptyCloudError:
        logger.warning("alignment breakdown at scan %d: scan empty after filtering; pose held", index)
        held = RegistrationResult(
            pose=state.current_pose, iterations=0, fitness_score=float("nan"),
            transformation_probability=float("nan"), tp_paper=float("nan"),
            converged=False, breakdown=True, rejected=True, wall_ms=elapsed(),
        )
        return state, _hold(state, scan, held)

    jump = float(np.linalg.norm(result.pose.translation - state.current_pose.translation))
    predicted = float(np.linalg.norm(guess.translation - state.current_pose.translation))
    if jump > config.error_threshold + predicted:
        logger.warning("scan rejected by error gate at scan %d: jump %.3f m > %.3f m",
                       index, jump, config.error_threshold + predicted)
        held = result.flagged(pose=state.current_pose, rejected=True, wall_ms=elapsed())
        return state, _hold(state, scan, held)

    state.previous_delta = relative(state.current_pose, result.pose)
    state.current_pose = result.pose
    result = result.flagged(wall_ms=elapsed())
    state.history.append(result)
    state.trajectory.append((scan.stamp, result.pose))
    return state, result


def localize_sequence(state: LocalizerState, scans: Iterable[Scan], config: RunConfig) -> LocalizerState:
    for scan in scans:
        localize_step(state, scan, config)
    return state
