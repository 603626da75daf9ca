"""Quality job.

Scores a map with mean map entropy and mean plane variance and exports the
per-point values (x,y,z,entropy,plane_variance) for colouring.
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))
sys.path.insert(0, str(PROJECT_ROOT / "config"))

from jobs.common import OutputTracker, banner  # noqa: E402
from lib.map_quality import export_point_quality, map_quality  # noqa: E402
from lib.pcd_io import read_scan  # noqa: E402
from lib.reporting import RunReport, write_report_json  # noqa: E402
from lib.run_config import RunConfig  # noqa: E402


class QualityJob:
    """Map-quality scoring."""

    def __init__(
        self,
        config: RunConfig,
        map_path: str,
        out_dir: Path,
        radius: Optional[float] = None,
        out_report: Optional[str] = None,
        out_points: Optional[str] = None,
        threads: int = 1,
        tracker: Optional[OutputTracker] = None,
    ) -> None:
        self.config = config
        self.map_path = map_path
        self.out_dir = Path(out_dir)
        self.radius = radius if radius is not None else config.quality_radius
        self.out_report = Path(out_report) if out_report else self.out_dir / "report.json"
        self.out_points = Path(out_points) if out_points else self.out_dir / "point_quality.csv"
        self.threads = max(1, threads)
        self.tracker = tracker or OutputTracker()

        banner("MAP QUALITY", Map=map_path, Radius=f"{self.radius:g} m", Threads=self.threads,
               Output=self.out_report)

    def run(self) -> RunReport:
        cloud = read_scan(self.map_path)
        print(f"\n1. Scoring {len(cloud)} map points...")
        quality = map_quality(cloud, self.radius, self.threads)
        export_point_quality(cloud, quality, self.tracker.file(self.out_points))

        report = RunReport(
            run_id=f"quality-{Path(self.map_path).stem}",
            kind="quality",
            config=self.config.with_overrides(quality_radius=self.radius).to_dict(),
            n_points_map=len(cloud),
            mme=quality.mme,
            mpv=quality.mpv,
            rejected_scans=0,
            artifacts={"points": self.out_points.name, "skipped_points": str(quality.skipped_points)},
        )
        write_report_json(report, self.tracker.file(self.out_report))
        print(f"\n✓ MME {quality.mme:.6f}  MPV {quality.mpv:.6f}  ({quality.skipped_points} skipped)")
        return report
