"""Downsample job.

Range gates and voxel filters every input scan and writes the result as
PCD; with ``sweep`` it also tabulates point counts for several maximum
ranges (range_sweep.csv: scan_index, max_range, n_input, n_gated,
n_filtered).
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import List, Optional

import pandas as pd

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))
sys.path.insert(0, str(PROJECT_ROOT / "config"))

from jobs.common import OutputTracker, banner  # noqa: E402
from lib.pcd_io import list_scan_files, read_scan, write_scan  # noqa: E402
from lib.preprocess import preprocess_scan, range_sweep  # noqa: E402
from lib.reporting import RunReport, write_report_json  # noqa: E402
from lib.run_config import RunConfig  # noqa: E402


class DownsampleJob:
    """Input-scan filtering."""

    def __init__(
        self,
        config: RunConfig,
        scans: str,
        out_dir: Path,
        leaf_size: Optional[float] = None,
        min_range: Optional[float] = None,
        max_range: Optional[float] = None,
        sweep: Optional[List[float]] = None,
        tracker: Optional[OutputTracker] = None,
    ) -> None:
        self.config = config
        self.scans = scans
        self.out_dir = Path(out_dir)
        self.leaf_size = leaf_size if leaf_size is not None else config.voxel_leaf_size
        self.min_range = min_range if min_range is not None else config.loc_min_range
        self.max_range = max_range if max_range is not None else config.max_range
        self.sweep = sweep or []
        self.tracker = tracker or OutputTracker()

        banner(
            "DOWNSAMPLE",
            Scans=scans,
            Leaf=f"{self.leaf_size:g} m",
            Range=f"[{self.min_range:g}, {self.max_range:g}] m",
            Sweep=", ".join(f"{r:g}" for r in self.sweep) or "-",
            Output=self.out_dir,
        )

    def run(self) -> RunReport:
        files = list_scan_files(self.scans)
        self.tracker.directory(self.out_dir)

        sweeps = []
        n_in = n_out = 0
        for i, path in enumerate(files):
            scan = read_scan(path)
            _, filtered = preprocess_scan(scan, self.min_range, self.max_range, self.leaf_size)
            write_scan(filtered, self.tracker.file(self.out_dir / path.name), binary=True)
            n_in += len(scan)
            n_out += len(filtered)
            if self.sweep:
                table = range_sweep(scan, self.leaf_size, self.sweep, self.min_range)
                table.insert(0, "scan_index", i)
                sweeps.append(table)

        print(f"\n✓ {len(files)} scans: {n_in} -> {n_out} points")
        artifacts = {"filtered": "."}
        if sweeps:
            sweep_path = self.tracker.file(self.out_dir / "range_sweep.csv")
            pd.concat(sweeps, ignore_index=True).to_csv(sweep_path, index=False)
            artifacts["range_sweep"] = sweep_path.name

        report = RunReport(
            run_id="downsample",
            kind="downsample",
            config=self.config.to_dict(),
            n_scans=len(files),
            n_points_map=n_out,
            artifacts=artifacts,
        )
        write_report_json(report, self.tracker.file(self.out_dir / "report.json"))
        return report
