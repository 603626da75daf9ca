"""
Unit tests for per-scan statistics, aggregates and run reports
"""
import json
import math

import numpy as np
import pandas as pd
import pytest

from lib.errors import FormatError
from lib.geometry import Pose6
from lib.ndt import RegistrationResult
from lib.reporting import (
    LOCALIZE_STATS_COLUMNS,
    STATS_COLUMNS,
    SUMMARY_COLUMNS,
    RunReport,
    aggregate_stats,
    aggregate_stats_frame,
    read_report_json,
    read_stats_csv,
    stats_frame,
    summary_table,
    write_report_json,
    write_stats_csv,
)


def result(iterations, fitness=0.1, rejected=False, wall_ms=0.0):
    return RegistrationResult(
        pose=Pose6(),
        iterations=iterations,
        fitness_score=fitness,
        transformation_probability=0.5,
        tp_paper=fitness / 100,
        converged=True,
        n_points=100,
        rejected=rejected,
        wall_ms=wall_ms,
    )


class TestAggregateStats:
    """Test mean / population std"""

    def test_constant(self):
        agg = aggregate_stats([result(2), result(2), result(2)])
        assert agg.mean_iterations == 2.0
        assert agg.std_iterations == 0.0

    def test_two_values(self):
        agg = aggregate_stats([result(1), result(3)])
        assert agg.mean_iterations == 2.0
        assert agg.std_iterations == 1.0

    def test_matches_two_pass(self, rng):
        iterations = rng.integers(1, 50, 100)
        fitness = rng.uniform(0, 1, 100)
        agg = aggregate_stats([result(int(i), float(f)) for i, f in zip(iterations, fitness)])
        mean = sum(fitness) / 100
        std = math.sqrt(sum((f - mean) ** 2 for f in fitness) / 100)
        assert agg.mean_fitness == pytest.approx(mean, abs=1e-12)
        assert agg.std_fitness == pytest.approx(std, abs=1e-12)

    def test_rejected_scans_excluded(self):
        agg = aggregate_stats([result(1), result(40, rejected=True), result(3)])
        assert agg.mean_iterations == 2.0

    def test_all_rejected(self):
        with pytest.raises(ValueError):
            aggregate_stats([result(1, rejected=True)])


class TestStatsCsv:
    """Test the per-scan statistics table"""

    def test_columns(self):
        trajectory = [(0.0, Pose6()), (0.1, Pose6())]
        assert list(stats_frame([result(1), result(2)], trajectory).columns) == STATS_COLUMNS
        assert list(stats_frame([result(1), result(2)], trajectory, wall_ms=True).columns) == LOCALIZE_STATS_COLUMNS

    def test_recomputed_aggregates_match(self, tmp_path):
        stats = [result(i % 5 + 1, 0.01 * i, rejected=(i == 3)) for i in range(20)]
        trajectory = [(0.1 * i, Pose6()) for i in range(20)]
        path = tmp_path / "stats.csv"
        write_stats_csv(stats_frame(stats, trajectory), path)
        assert aggregate_stats_frame(read_stats_csv(path)) == aggregate_stats(stats)

    def test_nan_written_as_text(self, tmp_path):
        path = tmp_path / "stats.csv"
        write_stats_csv(stats_frame([result(0, math.nan, rejected=True)], [(0.0, Pose6())]), path)
        assert "nan" in path.read_text()
        assert np.isnan(read_stats_csv(path)["fitness_score"].iloc[0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            stats_frame([result(1)], [])

    def test_missing_column(self, tmp_path):
        path = tmp_path / "stats.csv"
        pd.DataFrame({"scan_index": [0]}).to_csv(path, index=False)
        with pytest.raises(FormatError):
            read_stats_csv(path)


class TestRunReport:
    """Test report JSON and the summary table"""

    def test_round_trip(self, tmp_path):
        report = RunReport(run_id="map-VLP-16", kind="map", sensor="VLP-16", beams=16, n_scans=30,
                           drive_seconds=2.9, n_points_map=123456, mme=-3.2, mpv=0.04)
        report.set_aggregates(aggregate_stats([result(1), result(3)]))
        path = tmp_path / "report.json"
        write_report_json(report, path, generated_at="2026-01-01T00:00:00+00:00")
        back = read_report_json(path)
        assert back == report

    def test_nan_becomes_null(self, tmp_path):
        path = tmp_path / "report.json"
        write_report_json(RunReport(run_id="q", kind="quality", mme=math.nan), path)
        assert json.loads(path.read_text())["mme"] is None

    def test_only_generated_at_differs(self, tmp_path):
        report = RunReport(run_id="r", kind="map", n_scans=3)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        write_report_json(report, a, generated_at="one")
        write_report_json(report, b, generated_at="two")
        pa, pb = json.loads(a.read_text()), json.loads(b.read_text())
        assert pa.pop("generated_at") != pb.pop("generated_at")
        assert pa == pb

    def test_bad_json(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text("{not json")
        with pytest.raises(FormatError):
            read_report_json(path)

    def test_wrong_schema(self, tmp_path):
        path = tmp_path / "report.json"
        path.write_text(json.dumps({"run_id": "x", "kind": "map", "schema_version": 99}))
        with pytest.raises(FormatError, match="schema_version"):
            read_report_json(path)

    def test_summary_table(self):
        reports = [RunReport(run_id=f"map-{n}", kind="map", sensor=n, beams=b, n_scans=30)
                   for n, b in (("VLP-16", 16), ("VLS-128", 128))]
        table = summary_table(reports)
        assert list(table.columns) == SUMMARY_COLUMNS
        assert list(table["beams"]) == [16, 128]
