"""Map job.

Builds an NDT map from a scan sequence:

1. Read scans (directory of *.pcd or a list file), in name order
2. map_init on the first scan, map_step on the rest
3. Write map.pcd, trajectory.csv, stats.csv and elevation.csv
4. With a ground-truth trajectory, also elevation_error.csv and pose_errors.csv
5. Optionally score the finished map (MME / MPV)
6. Write report.json with the per-run aggregates
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))
sys.path.insert(0, str(PROJECT_ROOT / "config"))

from jobs.common import OutputTracker, banner  # noqa: E402
from lib.errors import EmptyCloudError  # noqa: E402
from lib.map_quality import map_quality  # noqa: E402
from lib.mapping import (  # noqa: E402
    MapBuildState,
    elevation_error_series,
    elevation_series,
    map_init,
    map_step,
    pose_errors,
)
from lib.pcd_io import list_scan_files, read_scan, read_trajectory, write_scan, write_trajectory  # noqa: E402
from lib.reporting import (  # noqa: E402
    RunReport,
    aggregate_stats,
    elevation_frame,
    stats_frame,
    write_report_json,
    write_stats_csv,
)
from lib.run_config import RunConfig  # noqa: E402


class MapJob:
    """Incremental NDT mapping run."""

    def __init__(
        self,
        config: RunConfig,
        scans: str,
        out_dir: Path,
        out_map: Optional[str] = None,
        out_traj: Optional[str] = None,
        out_stats: Optional[str] = None,
        ground_truth: Optional[str] = None,
        sensor: Optional[str] = None,
        beams: Optional[int] = None,
        with_quality: bool = False,
        threads: int = 1,
        tracker: Optional[OutputTracker] = None,
    ) -> None:
        self.config = config
        self.scans = scans
        self.out_dir = Path(out_dir)
        self.out_map = Path(out_map) if out_map else self.out_dir / "map.pcd"
        self.out_traj = Path(out_traj) if out_traj else self.out_dir / "trajectory.csv"
        self.out_stats = Path(out_stats) if out_stats else self.out_dir / "stats.csv"
        self.ground_truth = ground_truth
        self.sensor = sensor
        self.beams = beams
        self.with_quality = with_quality
        self.threads = threads
        self.tracker = tracker or OutputTracker()

        banner(
            "NDT MAPPING",
            Scans=scans,
            Resolution=f"{config.ndt_resolution:g} m",
            Range=f"[{config.min_range:g}, {config.max_range:g}] m",
            Leaf=f"{config.map_leaf_size:g} m",
            MinShift=f"{config.min_add_shift:g} m",
            Output=self.out_dir,
        )

    def build(self) -> MapBuildState:
        files = list_scan_files(self.scans)
        if not files:
            raise EmptyCloudError(f"no scans in {self.scans}")
        print(f"\n1. Mapping {len(files)} scans...")
        state = map_init(read_scan(files[0]), self.config)
        for i, path in enumerate(files[1:], start=1):
            map_step(state, read_scan(path), self.config)
            if i % 10 == 0:
                print(f"   scan {i}: {len(state.map_cloud)} map points, {state.additions} additions")
        return state

    def run(self) -> RunReport:
        state = self.build()
        self.tracker.directory(self.out_dir)

        print("\n2. Writing map, trajectory and statistics...")
        write_scan(state.map_cloud, self.tracker.file(self.out_map), binary=True)
        write_trajectory(state.trajectory, self.tracker.file(self.out_traj))
        stats = stats_frame(state.stats, state.trajectory)
        write_stats_csv(stats, self.tracker.file(self.out_stats))
        elevation_path = self.tracker.file(self.out_dir / "elevation.csv")
        elevation_frame(elevation_series(state.trajectory)).to_csv(elevation_path, index=False, float_format="%.9g")
        artifacts = {"map": self.out_map.name, "elevation": elevation_path.name}

        if self.ground_truth:
            truth = read_trajectory(self.ground_truth)
            error_path = self.tracker.file(self.out_dir / "elevation_error.csv")
            elevation_error_series(state.trajectory, truth).to_csv(error_path, index=False, float_format="%.9g")
            errors = pose_errors(state.trajectory, truth)
            errors_path = self.tracker.file(self.out_dir / "pose_errors.csv")
            errors.to_csv(errors_path, index=False, float_format="%.9g")
            artifacts.update({"elevation_error": error_path.name, "pose_errors": errors_path.name})
            print(f"   max pose error: {errors['translation_error'].max():.4f} m")

        rejected = sum(1 for r in state.stats if r.rejected)
        report = RunReport(
            run_id=f"map-{self.sensor or self.out_dir.name}",
            kind="map",
            config=self.config.to_dict(),
            sensor=self.sensor,
            beams=self.beams,
            n_scans=state.n_scans,
            drive_seconds=state.trajectory[-1][0] - state.trajectory[0][0],
            n_points_map=len(state.map_cloud),
            rejected_scans=rejected,
            stats_path=self.out_stats.name,
            trajectory_path=self.out_traj.name,
            artifacts=artifacts,
        )
        report.set_aggregates(aggregate_stats(state.stats))

        if self.with_quality:
            print("\n3. Scoring map quality...")
            quality = map_quality(state.map_cloud, self.config.quality_radius, self.threads)
            report.mme, report.mpv = quality.mme, quality.mpv

        write_report_json(report, self.tracker.file(self.out_dir / "report.json"))
        print(f"\n✓ map: {len(state.map_cloud)} points, {state.additions} additions, "
              f"mean iterations {report.mean_iterations:.4f}")
        if rejected:
            print(f"   ✗ {rejected} scans held after alignment breakdown")
        return report

