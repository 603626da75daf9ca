"""
Incremental NDT map construction

Each scan is aligned to the ND grid of the map built so far; it is merged
into the map only once the vehicle has moved at least ``min_add_shift``
meters since the last merge. The map cloud is never decimated.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import EmptyCloudError, OptimizationBreakdown
from .geometry import Pose6, Scan, compose, concatenate_scans, pose_difference, relative, transform_scan
from .nd_grid import NDVoxelGrid, build_nd_grid, grow_nd_grid
from .ndt import RegistrationResult, newton_align
from .preprocess import preprocess_scan, range_filter
from .run_config import RunConfig

logger = logging.getLogger(__name__)

Trajectory = List[Tuple[float, Pose6]]


@dataclass
class MapBuildState:
    """
    Mutable state of one mapping run, owned by a single driver

    ``trajectory`` and ``stats`` get one entry per processed scan,
    including the first.
    """

    map_cloud: Scan
    nd_grid: NDVoxelGrid
    last_added_pose: Pose6
    current_pose: Pose6
    previous_delta: Pose6 = field(default_factory=Pose6.identity)
    trajectory: Trajectory = field(default_factory=list)
    stats: List[RegistrationResult] = field(default_factory=list)
    additions: int = 0

    @property
    def n_scans(self) -> int:
        return len(self.trajectory)


def _held_result(pose: Pose6, n_points: int) -> RegistrationResult:
    return RegistrationResult(
        pose=pose,
        iterations=0,
        fitness_score=math.nan,
        transformation_probability=math.nan,
        tp_paper=math.nan,
        converged=False,
        score_trace=(),
        n_points=n_points,
        breakdown=True,
        rejected=True,
    )


def map_init(first_scan: Scan, config: RunConfig) -> MapBuildState:
    """
    Start a map from the range-gated first scan at the identity pose

    Raises:
        EmptyCloudError: nothing left after range gating
    """
    gated = range_filter(first_scan, config.min_range, config.max_range)
    if gated.is_empty:
        raise EmptyCloudError("scan empty after filtering")

    map_cloud = gated.with_xyz(gated.xyz, frame_id="map")
    grid = build_nd_grid(map_cloud, config.ndt_resolution, config.min_points_per_voxel)
    identity = Pose6.identity()
    first = RegistrationResult(
        pose=identity,
        iterations=0,
        fitness_score=0.0,
        transformation_probability=0.0,
        tp_paper=0.0,
        converged=True,
        score_trace=(),
        n_points=len(gated),
        added=True,
    )
    logger.info("map started with %d points, %d ND voxels", len(map_cloud), len(grid))
    return MapBuildState(
        map_cloud=map_cloud,
        nd_grid=grid,
        last_added_pose=identity,
        current_pose=identity,
        trajectory=[(first_scan.stamp, identity)],
        stats=[first],
        additions=1,
    )


def initial_guess(state_pose: Pose6, previous_delta: Pose6, mode: str) -> Pose6:
    """Constant-velocity guess (pose composed with the last delta) or the last pose"""
    if mode == "previous":
        return state_pose
    return compose(state_pose, previous_delta)


def map_step(state: MapBuildState, scan: Scan, config: RunConfig) -> MapBuildState:
    """
    Align one scan to the map and merge it when the vehicle moved enough

    A breakdown or an empty filtered scan holds the pose and is recorded
    with breakdown/rejected flags; mapping continues.
    """
    index = state.n_scans
    gated, filtered = preprocess_scan(scan, config.min_range, config.max_range, config.map_leaf_size)
    guess = initial_guess(state.current_pose, state.previous_delta, config.initial_guess)

    try:
        result = newton_align(state.nd_grid, filtered, guess, config)
    except OptimizationBreakdown as exc:
        logger.warning("alignment breakdown at scan %d: %s; pose held", index, exc)
        held = exc.result if exc.result is not None else _held_result(state.current_pose, len(filtered))
        state.trajectory.append((scan.stamp, state.current_pose))
        state.stats.append(held.flagged(pose=state.current_pose, breakdown=True, rejected=True))
        return state
    except EmptyCloudError:
        logger.warning("alignment breakdown at scan %d: scan empty after filtering; pose held", index)
        state.trajectory.append((scan.stamp, state.current_pose))
        state.stats.append(_held_result(state.current_pose, 0))
        return state

    pose = result.pose
    state.previous_delta = relative(state.current_pose, pose)
    state.current_pose = pose

    shift = float(np.linalg.norm(pose.translation - state.last_added_pose.translation))
    added = shift >= config.min_add_shift
    if added:
        world = transform_scan(gated, pose, frame_id="map")
        state.map_cloud = concatenate_scans([state.map_cloud, world], frame_id="map")
        state.nd_grid = grow_nd_grid(state.nd_grid, world, config.rebuild_growth)
        state.last_added_pose = pose
        state.additions += 1
        logger.debug("scan %d added (shift %.3f m); map has %d points", index, shift, len(state.map_cloud))

    state.trajectory.append((scan.stamp, pose))
    state.stats.append(result.flagged(added=added))
    return state


def build_map(scans: Iterable[Scan], config: RunConfig) -> MapBuildState:
    """Run map_init on the first scan and map_step on the rest"""
    state: Optional[MapBuildState] = None
    for scan in scans:
        state = map_init(scan, config) if state is None else map_step(state, scan, config)
    if state is None:
        raise EmptyCloudError("no scans to map")
    return state


# ---------------------------------------------------------------------------
# Drift analysis
# ---------------------------------------------------------------------------

def elevation_series(trajectory: Sequence[Tuple[float, Pose6]]) -> List[Tuple[float, float]]:
    """
    (cumulative planar distance, z) per pose

    Example:
        >>> elevation_series([(0, Pose6(z=1)), (1, Pose6(x=3, y=4, z=1))])
        [(0.0, 1.0), (5.0, 1.0)]
    """
    if not trajectory:
        raise ValueError("trajectory is empty")
    xy = np.array([[p.x, p.y] for _, p in trajectory])
    steps = np.hypot(*np.diff(xy, axis=0).T) if len(trajectory) > 1 else np.zeros(0)
    distance = np.concatenate([[0.0], np.cumsum(steps)])
    return [(float(d), float(p.z)) for d, (_, p) in zip(distance, trajectory)]


def elevation_error_series(trajectory: Sequence[Tuple[float, Pose6]],
                           ground_truth: Sequence[Tuple[float, Pose6]]) -> pd.DataFrame:
    """
    Estimated and true elevation against travelled distance

    Both trajectories are taken relative to their first pose, so a
    map-frame estimate compares directly with world-frame truth.

    Returns:
        DataFrame with columns distance, z, z_true, z_error
    """
    if len(trajectory) != len(ground_truth):
        raise ValueError(f"trajectory has {len(trajectory)} poses, ground truth {len(ground_truth)}")
    est = _relative_to_first(trajectory)
    truth = _relative_to_first(ground_truth)
    series = elevation_series(est)
    true_series = elevation_series(truth)
    df = pd.DataFrame({
        "distance": [d for d, _ in true_series],
        "z": [z for _, z in series],
        "z_true": [z for _, z in true_series],
    })
    df["z_error"] = df["z"] - df["z_true"]
    return df


def _relative_to_first(trajectory: Sequence[Tuple[float, Pose6]]) -> Trajectory:
    origin = trajectory[0][1]
    return [(stamp, relative(origin, pose)) for stamp, pose in trajectory]


def pose_errors(trajectory: Sequence[Tuple[float, Pose6]],
                ground_truth: Sequence[Tuple[float, Pose6]]) -> pd.DataFrame:
    """
    Per-scan translation (m) and rotation (rad) error against ground truth,
    each trajectory expressed relative to its first pose

    Returns:
        DataFrame with columns scan_index, stamp, translation_error, rotation_error
    """
    if len(trajectory) != len(ground_truth):
        raise ValueError(f"trajectory has {len(trajectory)} poses, ground truth {len(ground_truth)}")
    rows = []
    for i, ((stamp, est), (_, truth)) in enumerate(zip(_relative_to_first(trajectory),
                                                      _relative_to_first(ground_truth))):
        t_err, r_err = pose_difference(est, truth)
        rows.append({"scan_index": i, "stamp": stamp, "translation_error": t_err, "rotation_error": r_err})
    return pd.DataFrame(rows, columns=["scan_index", "stamp", "translation_error", "rotation_error"])
