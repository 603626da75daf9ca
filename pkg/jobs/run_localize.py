"""Localize job.

Localizes a scan sequence against a fixed reference map:

1. Read the map and build its ND grid
2. Chain localize_step over the scans from the supplied initial pose
3. Write trajectory.csv, stats.csv (with rejected and wall_ms) and
   iterations.csv; pose_errors.csv when ground truth is given
4. Write report.json
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))
sys.path.insert(0, str(PROJECT_ROOT / "config"))

from jobs.common import OutputTracker, banner  # noqa: E402
from lib.geometry import Pose6  # noqa: E402
from lib.localization import LocalizerState, localize_step, localizer_init  # noqa: E402
from lib.mapping import pose_errors  # noqa: E402
from lib.pcd_io import list_scan_files, read_scan, read_trajectory, write_trajectory  # noqa: E402
from lib.reporting import (  # noqa: E402
    RunReport,
    aggregate_stats,
    iterations_frame,
    stats_frame,
    write_report_json,
    write_stats_csv,
)
from lib.run_config import RunConfig  # noqa: E402


class LocalizeJob:
    """Frame-by-frame localization run."""

    def __init__(
        self,
        config: RunConfig,
        map_path: str,
        scans: str,
        out_dir: Path,
        init_pose: Optional[Pose6] = None,
        out_traj: Optional[str] = None,
        out_stats: Optional[str] = None,
        ground_truth: Optional[str] = None,
        tracker: Optional[OutputTracker] = None,
    ) -> None:
        self.config = config
        self.map_path = map_path
        self.scans = scans
        self.out_dir = Path(out_dir)
        self.init_pose = init_pose or Pose6.identity()
        self.out_traj = Path(out_traj) if out_traj else self.out_dir / "trajectory.csv"
        self.out_stats = Path(out_stats) if out_stats else self.out_dir / "stats.csv"
        self.ground_truth = ground_truth
        self.tracker = tracker or OutputTracker()

        banner(
            "NDT LOCALIZATION",
            Map=map_path,
            Scans=scans,
            InitPose=", ".join(f"{v:g}" for v in self.init_pose.as_vector()),
            Leaf=f"{config.voxel_leaf_size:g} m",
            Gate=f"{config.error_threshold:g} m",
            Guess=config.initial_guess,
            Output=self.out_dir,
        )

    def localize(self) -> LocalizerState:
        files = list_scan_files(self.scans)
        state = localizer_init(read_scan(self.map_path), self.init_pose, self.config)
        print(f"\n1. Localizing {len(files)} scans...")
        for path in files:
            localize_step(state, read_scan(path), self.config)
        return state

    def run(self) -> RunReport:
        state = self.localize()
        self.tracker.directory(self.out_dir)

        print("\n2. Writing trajectory and statistics...")
        write_trajectory(state.trajectory, self.tracker.file(self.out_traj))
        write_stats_csv(stats_frame(state.history, state.trajectory, wall_ms=True),
                        self.tracker.file(self.out_stats))
        iterations_path = self.tracker.file(self.out_dir / "iterations.csv")
        iterations_frame(state.history).to_csv(iterations_path, index=False)
        artifacts = {"iterations": iterations_path.name}

        if self.ground_truth:
            truth = read_trajectory(self.ground_truth)
            errors_path = self.tracker.file(self.out_dir / "pose_errors.csv")
            pose_errors(state.trajectory, truth).to_csv(errors_path, index=False, float_format="%.9g")
            artifacts["pose_errors"] = errors_path.name

        report = RunReport(
            run_id=f"localize-{self.out_dir.name}",
            kind="localize",
            config=self.config.to_dict(),
            n_scans=len(state.history),
            drive_seconds=state.trajectory[-1][0] - state.trajectory[0][0] if state.trajectory else 0.0,
            n_points_map=state.nd_grid.n_points,
            rejected_scans=state.rejected_count,
            stats_path=self.out_stats.name,
            trajectory_path=self.out_traj.name,
            artifacts=artifacts,
        )
        if state.rejected_count < len(state.history):
            report.set_aggregates(aggregate_stats(state.history))

        write_report_json(report, self.tracker.file(self.out_dir / "report.json"))
        print(f"\n✓ {len(state.history)} scans, {state.rejected_count} rejected, "
              f"mean iterations {report.mean_iterations}")
        return report
