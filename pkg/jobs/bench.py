"""Bench command line.

Runs the experiments end to end and writes machine-readable reports:

    python jobs/bench.py simulate --scene corridor --preset VLP-16 --out out/sim
    python jobs/bench.py map --scans out/sim --ground-truth out/sim/ground_truth.csv
    python jobs/bench.py localize --map out/map/map.pcd --scans out/sim --init-pose 0,0,0,0,0,0
    python jobs/bench.py quality --map out/map/map.pcd --radius 1.0
    python jobs/bench.py downsample --scans out/sim --sweep 200,100,50,20
    python jobs/bench.py report out/ --out out/summary.csv
    python jobs/bench.py sweep --presets VLP-16,VLP-32C,Pandar-64,VLS-128

Every subcommand accepts --config, --seed, --out-dir and --threads.
Exit codes: 0 ok, 2 usage, 3 configuration, 4 input/format,
5 numerical or empty data, 1 anything else. Files created by a failed run
are removed.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))
sys.path.insert(0, str(PROJECT_ROOT / "config"))

import config  # noqa: E402
from jobs.common import (  # noqa: E402
    OutputTracker,
    banner,
    parse_float_list,
    parse_pose,
    resolve_run_config,
    setup_logging,
)
from jobs.run_downsample import DownsampleJob  # noqa: E402
from jobs.run_localize import LocalizeJob  # noqa: E402
from jobs.run_map import MapJob  # noqa: E402
from jobs.run_quality import QualityJob  # noqa: E402
from jobs.run_report import ReportJob  # noqa: E402
from jobs.run_simulate import SimulateJob  # noqa: E402
from lib.errors import (  # noqa: E402
    ConfigError,
    DegenerateMapError,
    EmptyCloudError,
    FormatError,
    OptimizationBreakdown,
)
from lib.reporting import RunReport, summary_table, write_summary_csv  # noqa: E402
from lib.simulator import load_preset  # noqa: E402

logger = logging.getLogger("ndt_atlas.bench")

EXIT_OK = 0
EXIT_OTHER = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_INPUT = 4
EXIT_NUMERICAL = 5

KINDS = ("simulate", "downsample", "map", "localize", "quality", "report", "sweep")


class SweepJob:
    """Beam-count sweep: simulate -> map -> quality for each preset."""

    def __init__(self, args: argparse.Namespace, out_dir: Path, tracker: OutputTracker) -> None:
        self.args = args
        self.out_dir = Path(out_dir)
        self.tracker = tracker
        self.presets = [p.strip() for p in args.presets.split(",") if p.strip()]
        banner("BEAM-COUNT SWEEP", Presets=", ".join(self.presets), Scene=args.scene,
               Drive=f"{args.length:g} m / {args.n_scans} scans", Output=self.out_dir)

    def run(self) -> RunReport:
        cfg = resolve_run_config(self.args.config, self.args.seed)
        reports = []
        for name in self.presets:
            preset = load_preset(name)
            run_dir = self.out_dir / preset.name
            scans_dir = run_dir / "scans"
            SimulateJob(cfg, scans_dir, scene=self.args.scene, preset=name, n_scans=self.args.n_scans,
                        length=self.args.length, ramp_scans=self.args.ramp_scans, tracker=self.tracker).run()
            reports.append(MapJob(
                cfg, str(scans_dir), run_dir,
                ground_truth=str(scans_dir / "ground_truth.csv"),
                sensor=preset.name, beams=preset.channels,
                with_quality=not self.args.no_quality,
                threads=self.args.threads, tracker=self.tracker,
            ).run())
        summary_path = self.tracker.file(self.out_dir / "summary.csv")
        write_summary_csv(summary_table(reports), summary_path)
        print(f"\n✓ sweep summary -> {summary_path}")
        return RunReport(run_id="sweep", kind="sweep", config=cfg.to_dict(),
                         n_scans=sum(r.n_scans for r in reports), artifacts={"summary": summary_path.name})


def _out_dir(args: argparse.Namespace, default_name: str) -> Path:
    return Path(args.out_dir) if args.out_dir else config.OUT_DIR / default_name


def run_experiment(kind: str, args: argparse.Namespace) -> RunReport:
    """
    Run one subcommand; files it created are removed if it fails

    Raises:
        ValueError: unknown kind
    """
    if kind not in KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    tracker = OutputTracker()
    threads = args.threads
    try:
        if kind == "report":
            return ReportJob(args.inputs, Path(args.out) if args.out else _out_dir(args, "report") / "summary.csv",
                             tracker=tracker).run()
        if kind == "sweep":
            return SweepJob(args, _out_dir(args, "sweep"), tracker).run()

        cfg = resolve_run_config(args.config, args.seed)
        if kind == "simulate":
            job = SimulateJob(cfg, Path(args.out) if args.out else _out_dir(args, "simulate"),
                              scene=args.scene, preset=args.preset, drive=args.drive,
                              n_scans=args.n_scans, length=args.length, height=args.height,
                              ramp_scans=args.ramp_scans, tracker=tracker)
        elif kind == "downsample":
            job = DownsampleJob(cfg, args.scans, Path(args.out) if args.out else _out_dir(args, "downsample"),
                                leaf_size=args.leaf, min_range=args.min_range, max_range=args.max_range,
                                sweep=parse_float_list(args.sweep) if args.sweep else None, tracker=tracker)
        elif kind == "map":
            job = MapJob(cfg, args.scans, _out_dir(args, "map"), out_map=args.out_map, out_traj=args.out_traj,
                         out_stats=args.out_stats, ground_truth=args.ground_truth, sensor=args.sensor,
                         beams=args.beams, with_quality=args.quality, threads=threads, tracker=tracker)
        elif kind == "localize":
            init_pose = parse_pose(args.init_pose) if args.init_pose else None
            job = LocalizeJob(cfg, args.map, args.scans, _out_dir(args, "localize"), init_pose=init_pose,
                              out_traj=args.out_traj, out_stats=args.out_stats,
                              ground_truth=args.ground_truth, tracker=tracker)
        else:
            job = QualityJob(cfg, args.map, _out_dir(args, "quality"), radius=args.radius,
                             out_report=args.out_report, out_points=args.out_points,
                             threads=threads, tracker=tracker)
        return job.run()
    except BaseException:
        tracker.cleanup()
        raise


def exit_code_for(exc: BaseException) -> int:
    """Map an exception to its CLI exit category"""
    if isinstance(exc, ConfigError):
        return EXIT_CONFIG
    if isinstance(exc, (EmptyCloudError, DegenerateMapError, OptimizationBreakdown)):
        return EXIT_NUMERICAL
    if isinstance(exc, (FormatError, OSError, ValueError)):
        return EXIT_INPUT
    return EXIT_OTHER


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="config", type=str, help="Run configuration file (key = value).")
    common.add_argument("--seed", dest="seed", type=int, help="Override the configured seed.")
    common.add_argument("--out-dir", dest="out_dir", type=str, help="Output directory (default out/<subcommand>).")
    common.add_argument("--threads", dest="threads", type=int, default=config.DEFAULT_THREADS,
                        help=f"Worker threads for map quality (default {config.DEFAULT_THREADS}).")

    parser = argparse.ArgumentParser(prog="bench", description="NDT mapping / localization benchmark")
    sub = parser.add_subparsers(dest="kind", metavar="subcommand")
    sub.required = True

    p = sub.add_parser("simulate", parents=[common], help="Cast a synthetic drive")
    p.add_argument("--scene", default="corridor", help="room, corridor or a scene file (default corridor).")
    p.add_argument("--preset", default="VLP-16", help="Sensor preset name or preset file (default VLP-16).")
    p.add_argument("--drive", help="Ground-truth trajectory CSV; default is a straight drive.")
    p.add_argument("--n-scans", dest="n_scans", type=int, default=30)
    p.add_argument("--length", type=float, default=20.0, help="Straight-drive length in meters.")
    p.add_argument("--height", type=float, default=1.3, help="Sensor height in meters.")
    p.add_argument("--ramp-scans", dest="ramp_scans", type=int, default=0,
                   help="Start from rest and reach cruise speed after N scans.")
    p.add_argument("--out", help="Scan output directory (overrides --out-dir).")

    p = sub.add_parser("downsample", parents=[common], help="Range gate and voxel filter scans")
    p.add_argument("--scans", required=True, help="Directory of .pcd files or a list file.")
    p.add_argument("--leaf", type=float, help="Voxel leaf size (default from config).")
    p.add_argument("--min-range", dest="min_range", type=float)
    p.add_argument("--max-range", dest="max_range", type=float)
    p.add_argument("--sweep", help="Comma separated maximum ranges, e.g. 200,100,50,20.")
    p.add_argument("--out", help="Output directory (overrides --out-dir).")

    p = sub.add_parser("map", parents=[common], help="Build an NDT map")
    p.add_argument("--scans", required=True)
    p.add_argument("--out-map", dest="out_map")
    p.add_argument("--out-traj", dest="out_traj")
    p.add_argument("--out-stats", dest="out_stats")
    p.add_argument("--ground-truth", dest="ground_truth", help="Ground-truth trajectory CSV.")
    p.add_argument("--sensor", help="Sensor label for the report.")
    p.add_argument("--beams", type=int, help="Channel count for the report.")
    p.add_argument("--quality", action="store_true", help="Also score MME / MPV of the finished map.")

    p = sub.add_parser("localize", parents=[common], help="Localize scans against a map")
    p.add_argument("--map", required=True)
    p.add_argument("--scans", required=True)
    p.add_argument("--init-pose", dest="init_pose", help='"x,y,z,roll,pitch,yaw" (default identity).')
    p.add_argument("--out-traj", dest="out_traj")
    p.add_argument("--out-stats", dest="out_stats")
    p.add_argument("--ground-truth", dest="ground_truth")

    p = sub.add_parser("quality", parents=[common], help="Score MME / MPV of a map")
    p.add_argument("--map", required=True)
    p.add_argument("--radius", type=float, help="Neighbourhood radius (default from config).")
    p.add_argument("--out-report", dest="out_report")
    p.add_argument("--out-points", dest="out_points")

    p = sub.add_parser("report", parents=[common], help="Summarise report.json files")
    p.add_argument("inputs", nargs="+", help="report.json files or directories to search.")
    p.add_argument("--out", help="Summary CSV path.")

    p = sub.add_parser("sweep", parents=[common], help="simulate -> map -> quality per preset")
    p.add_argument("--presets", default=",".join(config.SWEEP_PRESETS))
    p.add_argument("--scene", default="corridor")
    p.add_argument("--n-scans", dest="n_scans", type=int, default=30)
    p.add_argument("--length", type=float, default=20.0)
    p.add_argument("--ramp-scans", dest="ramp_scans", type=int, default=15)
    p.add_argument("--no-quality", dest="no_quality", action="store_true")
    return parser


def parse_args(argv: Optional[List[str]] = None) -> argparse.Namespace:
    """Parse command line arguments."""
    return build_parser().parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE

    setup_logging()
    try:
        run_experiment(args.kind, args)
    except Exception as exc:  # noqa: BLE001
        code = exit_code_for(exc)
        logger.error("%s failed: %s", args.kind, exc)
        print(f"\n✗ {args.kind} failed: {exc}")
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main(sys.argv[1:]))
