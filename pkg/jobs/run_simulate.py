"""Simulate job.

Casts a synthetic drive through an analytic scene with one sensor preset:

1. Load the scene (built-in ``room``/``corridor`` or a scene file)
2. Load the preset (built-in name or preset file)
3. Build the drive (ground-truth CSV, or a straight drive along +x)
4. Write scan_XXXX.pcd, ground_truth.csv and report.json to the output dir
"""
from __future__ import annotations

import sys
from pathlib import Path
from typing import Optional

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))
sys.path.insert(0, str(PROJECT_ROOT / "config"))

from jobs.common import OutputTracker, banner  # noqa: E402
from lib.pcd_io import read_trajectory  # noqa: E402
from lib.reporting import RunReport, write_report_json  # noqa: E402
from lib.run_config import RunConfig  # noqa: E402
from lib.simulator import (  # noqa: E402
    GroundTruthDrive,
    Scene,
    corridor_scene,
    load_preset,
    read_scene,
    room_scene,
    simulate_drive,
    straight_drive,
)


def load_scene(name: str, length: float = 60.0) -> Scene:
    """``room``, ``corridor`` or a scene file path"""
    if name == "room":
        return room_scene()
    if name == "corridor":
        return corridor_scene(length=length)
    return read_scene(name)


class SimulateJob:
    """Synthetic drive generator."""

    def __init__(
        self,
        config: RunConfig,
        out_dir: Path,
        scene: str = "corridor",
        preset: str = "VLP-16",
        drive: Optional[str] = None,
        n_scans: int = 30,
        length: float = 20.0,
        height: float = 1.3,
        rate_hz: float = 10.0,
        ramp_scans: int = 0,
        tracker: Optional[OutputTracker] = None,
    ) -> None:
        self.config = config
        self.out_dir = Path(out_dir)
        self.scene_spec = scene
        self.preset_spec = preset
        self.drive_path = drive
        self.n_scans = n_scans
        self.length = length
        self.height = height
        self.rate_hz = rate_hz
        self.ramp_scans = ramp_scans
        self.tracker = tracker or OutputTracker()

        banner(
            "SIMULATE",
            Scene=scene,
            Preset=preset,
            Drive=drive or f"straight {length:g} m / {n_scans} scans",
            Seed=config.seed,
            Output=self.out_dir,
        )

    def build_drive(self) -> GroundTruthDrive:
        scene = load_scene(self.scene_spec, self.length)
        preset = load_preset(self.preset_spec)
        if self.drive_path:
            poses = read_trajectory(self.drive_path)
            return GroundTruthDrive(tuple(poses), scene, preset, self.config.seed)
        return straight_drive(scene, preset, self.n_scans, self.length, height=self.height,
                              rate_hz=self.rate_hz, seed=self.config.seed, ramp_scans=self.ramp_scans)

    def run(self) -> RunReport:
        drive = self.build_drive()
        self.tracker.directory(self.out_dir)

        print(f"\n1. Casting {len(drive)} scans with {drive.preset.name}...")
        scans, trajectory = simulate_drive(drive, out_dir=self.out_dir, binary=True)
        n_points = sum(len(s) for s in scans)
        print(f"   {n_points} points total, {n_points / len(scans):.0f} per scan")

        report = RunReport(
            run_id=f"simulate-{drive.preset.name}",
            kind="simulate",
            config=self.config.to_dict(),
            sensor=drive.preset.name,
            beams=drive.preset.channels,
            n_scans=len(scans),
            drive_seconds=drive.duration,
            trajectory_path="ground_truth.csv",
            artifacts={"scans": "."},
        )
        write_report_json(report, self.tracker.file(self.out_dir / "report.json"))
        print(f"\n✓ wrote scans and ground_truth.csv to {self.out_dir}")
        return report

