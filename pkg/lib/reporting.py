"""
Run reports: per-scan statistics, aggregates and the mapping summary table

Per-run aggregates use the population standard deviation over
non-rejected scans. Reports are JSON with a ``schema_version``; the only
non-deterministic value is isolated in ``generated_at``.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import FormatError
from .geometry import Pose6
from .ndt import RegistrationResult

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1
STATS_COLUMNS = [
    "scan_index", "stamp", "iterations", "fitness_score", "tp_paper", "tp_score",
    "converged", "added", "rejected",
]
LOCALIZE_STATS_COLUMNS = STATS_COLUMNS + ["wall_ms"]
SUMMARY_COLUMNS = [
    "run_id", "sensor", "beams", "n_points", "drive_seconds", "n_scans",
    "mean_iterations", "std_iterations", "mean_fitness", "std_fitness", "mme", "mpv",
]

PathLike = Union[str, Path]


class AggregateStats(NamedTuple):
    mean_iterations: float
    std_iterations: float
    mean_fitness: float
    std_fitness: float


def aggregate_stats(per_scan: Sequence[RegistrationResult]) -> AggregateStats:
    """
    Mean and population std of iterations and fitness over non-rejected scans

    Example:
        >>> aggregate_stats([r1, r3])     # iterations 1 and 3
        AggregateStats(mean_iterations=2.0, std_iterations=1.0, ...)
    """
    kept = [r for r in per_scan if not r.rejected]
    if not kept:
        raise ValueError("aggregate_stats needs at least one non-rejected scan")
    iterations = np.array([r.iterations for r in kept], dtype=np.float64)
    fitness = np.array([r.fitness_score for r in kept], dtype=np.float64)
    return _aggregate(iterations, fitness)


def _aggregate(iterations: np.ndarray, fitness: np.ndarray) -> AggregateStats:
    return AggregateStats(
        float(np.mean(iterations)),
        float(np.std(iterations)),
        float(np.mean(fitness)),
        float(np.std(fitness)),
    )


def aggregate_stats_frame(df: pd.DataFrame) -> AggregateStats:
    """Same aggregates recomputed from a per-scan stats table"""
    kept = df[~df["rejected"].astype(bool)]
    if kept.empty:
        raise ValueError("no non-rejected rows")
    return _aggregate(kept["iterations"].to_numpy(dtype=np.float64),
                      kept["fitness_score"].to_numpy(dtype=np.float64))


def stats_frame(stats: Sequence[RegistrationResult], trajectory: Sequence[Tuple[float, Pose6]],
                wall_ms: bool = False) -> pd.DataFrame:
    """One row per processed scan"""
    if len(stats) != len(trajectory):
        raise ValueError("stats and trajectory lengths differ")
    rows = []
    for i, (result, (stamp, _)) in enumerate(zip(stats, trajectory)):
        row = {
            "scan_index": i,
            "stamp": stamp,
            "iterations": result.iterations,
            "fitness_score": result.fitness_score,
            "tp_paper": result.tp_paper,
            "tp_score": result.tp_score,
            "converged": bool(result.converged),
            "added": bool(result.added),
            "rejected": bool(result.rejected),
        }
        if wall_ms:
            row["wall_ms"] = result.wall_ms
        rows.append(row)
    return pd.DataFrame(rows, columns=LOCALIZE_STATS_COLUMNS if wall_ms else STATS_COLUMNS)


def write_stats_csv(df: pd.DataFrame, path: PathLike) -> None:
    df.to_csv(path, index=False, float_format="%.17g", na_rep="nan")


def read_stats_csv(path: PathLike) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in STATS_COLUMNS if c not in df.columns]
    if missing:
        raise FormatError(f"missing column {missing[0]!r}", path=str(path))
    return df


def iterations_frame(stats: Sequence[RegistrationResult]) -> pd.DataFrame:
    return pd.DataFrame({"scan_index": range(len(stats)), "iterations": [r.iterations for r in stats]})


def elevation_frame(series: Iterable[Tuple[float, float]]) -> pd.DataFrame:
    series = list(series)
    return pd.DataFrame({"distance": [d for d, _ in series], "z": [z for _, z in series]})


@dataclass
class RunReport:
    """
    Machine-readable record of one bench run

    ``drive_seconds`` is the stamp span of the processed scans.
    """

    run_id: str
    kind: str
    config: Dict = field(default_factory=dict)
    sensor: Optional[str] = None
    beams: Optional[int] = None
    n_scans: int = 0
    drive_seconds: float = 0.0
    n_points_map: int = 0
    mean_iterations: Optional[float] = None
    std_iterations: Optional[float] = None
    mean_fitness: Optional[float] = None
    std_fitness: Optional[float] = None
    mme: Optional[float] = None
    mpv: Optional[float] = None
    rejected_scans: int = 0
    stats_path: Optional[str] = None
    trajectory_path: Optional[str] = None
    artifacts: Dict[str, str] = field(default_factory=dict)
    schema_version: int = REPORT_SCHEMA_VERSION

    def set_aggregates(self, aggregates: AggregateStats) -> None:
        self.mean_iterations, self.std_iterations, self.mean_fitness, self.std_fitness = aggregates

    def to_dict(self) -> Dict:
        return {k: _json_value(v) for k, v in asdict(self).items()}


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (np.floating, np.integer)):
        return _json_value(value.item())
    return value


def write_report_json(report: RunReport, path: PathLike, generated_at: Optional[str] = None) -> None:
    """Write the report; ``generated_at`` is the only run-dependent key"""
    payload = report.to_dict()
    payload["generated_at"] = generated_at or datetime.now(timezone.utc).isoformat(timespec="seconds")
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def read_report_json(path: PathLike) -> RunReport:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", path=str(path), line=exc.lineno) from exc
    payload.pop("generated_at", None)
    if payload.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise FormatError(f"unsupported schema_version {payload.get('schema_version')!r}", path=str(path))
    known = set(RunReport.__dataclass_fields__)
    unknown = sorted(set(payload) - known)
    if unknown:
        logger.warning("ignoring unknown report keys %s in %s", unknown, path)
    return RunReport(**{k: v for k, v in payload.items() if k in known})


def summary_table(reports: Iterable[RunReport]) -> pd.DataFrame:
    """One row per run with the mapping-table columns"""
    rows = []
    for r in reports:
        rows.append({
            "run_id": r.run_id,
            "sensor": r.sensor,
            "beams": r.beams,
            "n_points": r.n_points_map,
            "drive_seconds": r.drive_seconds,
            "n_scans": r.n_scans,
            "mean_iterations": r.mean_iterations,
            "std_iterations": r.std_iterations,
            "mean_fitness": r.mean_fitness,
            "std_fitness": r.std_fitness,
            "mme": r.mme,
            "mpv": r.mpv,
        })
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_summary_csv(df: pd.DataFrame, path: PathLike) -> None:
    df.to_csv(path, index=False, float_format="%.6f", na_rep="")
