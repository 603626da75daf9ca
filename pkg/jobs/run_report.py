"""Report job.

Collects per-run JSON reports into one summary CSV with the mapping-table
columns (sensor, beams, n_points, drive_seconds, n_scans, mean/std
iterations, mean/std fitness, mme, mpv).
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import List, Optional

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))
sys.path.insert(0, str(PROJECT_ROOT / "config"))

from jobs.common import OutputTracker, banner  # noqa: E402
from lib.reporting import RunReport, read_report_json, summary_table, write_summary_csv  # noqa: E402


def find_reports(inputs: List[str]) -> List[Path]:
    """JSON files given directly, or report.json files found under directories"""
    found: List[Path] = []
    for item in inputs:
        path = Path(item)
        if path.is_dir():
            found.extend(sorted(path.rglob("report.json")))
        elif path.exists():
            found.append(path)
        else:
            raise FileNotFoundError(f"no such report: {path}")
    return found


class ReportJob:
    """Summary-table builder."""

    def __init__(self, inputs: List[str], out_path: Path, tracker: Optional[OutputTracker] = None) -> None:
        self.inputs = inputs
        self.out_path = Path(out_path)
        self.tracker = tracker or OutputTracker()
        banner("RUN SUMMARY", Inputs=", ".join(inputs), Output=self.out_path)

    def run(self) -> RunReport:
        paths = find_reports(self.inputs)
        if not paths:
            raise ValueError("no report.json files found")
        reports = [read_report_json(p) for p in paths]
        mapping_runs = [r for r in reports if r.kind == "map"] or reports
        table = summary_table(mapping_runs)
        write_summary_csv(table, self.tracker.file(self.out_path))
        print(f"\n✓ {len(table)} runs summarised -> {self.out_path}")
        return RunReport(
            run_id="report",
            kind="report",
            n_scans=int(sum(r.n_scans for r in mapping_runs)),
            artifacts={"summary": str(self.out_path.name)},
        )
