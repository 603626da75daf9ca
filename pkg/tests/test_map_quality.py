"""
Unit tests for mean map entropy and mean plane variance
"""
import logging
import math

import numpy as np
import pandas as pd
import pytest

from lib.errors import DegenerateMapError, EmptyCloudError
from lib.geometry import Pose6, Scan, transform_scan
from lib.map_quality import export_point_quality, map_quality, per_point_quality, point_entropy, point_plane_variance
from lib.simulator import room_scene, sample_scene


def gaussian_entropy(sigma):
    return 0.5 * math.log((2 * math.pi * math.e) ** 3 * sigma ** 6)


@pytest.fixture(scope="module")
def noisy_plane():
    rng = np.random.default_rng(21)
    n = 10000
    return Scan(np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-1, 1, n), rng.uniform(-0.05, 0.05, n)]))


class TestPointEntropy:
    """Test the per-point differential entropy"""

    def test_isotropic_gaussian(self):
        rng = np.random.default_rng(3)
        cloud = Scan(rng.normal(0, 0.1, size=(10000, 3)))
        assert gaussian_entropy(0.1) == pytest.approx(-2.65, abs=0.01)
        assert point_entropy(cloud, 0, radius=10.0) == pytest.approx(gaussian_entropy(0.1), abs=0.05)

    def test_coincident_neighbours_undefined(self):
        assert math.isnan(point_entropy(Scan(np.ones((10, 3))), 0, radius=1.0))

    def test_too_few_neighbours(self):
        assert math.isnan(point_entropy(Scan(np.eye(3) * 0.1), 0, radius=1.0))

    def test_matches_covariance_oracle(self):
        rng = np.random.default_rng(4)
        cloud = Scan(rng.normal(0, 0.3, size=(50, 3)))
        cov = np.cov(cloud.xyz.T, bias=True)
        expected = 0.5 * math.log((2 * math.pi * math.e) ** 3 * np.linalg.det(cov))
        assert point_entropy(cloud, 7, radius=100.0) == pytest.approx(expected, abs=1e-10)

    def test_radius_must_be_positive(self):
        with pytest.raises(ValueError):
            point_entropy(Scan(np.zeros((5, 3))), 0, radius=0.0)


class TestPointPlaneVariance:
    """Test the upper-quartile plane residual"""

    def test_flat_neighbourhood(self):
        rng = np.random.default_rng(5)
        cloud = Scan(np.column_stack([rng.uniform(-1, 1, (200, 2)), np.zeros(200)]))
        assert point_plane_variance(cloud, 0, radius=5.0) < 1e-12

    def test_uniform_noise(self, noisy_plane):
        assert point_plane_variance(noisy_plane, 0, radius=5.0) == pytest.approx(0.0375, abs=0.005)

    def test_matches_eigen_fit_oracle(self):
        rng = np.random.default_rng(6)
        xyz = rng.normal(0, [1.0, 0.8, 0.05], size=(50, 3))
        centred = xyz - xyz.mean(axis=0)
        _, vectors = np.linalg.eigh(centred.T @ centred / 50)
        expected = np.percentile(np.abs(centred @ vectors[:, 0]), 75)
        assert point_plane_variance(Scan(xyz), 3, radius=100.0) == pytest.approx(expected, abs=1e-9)

    def test_too_few_neighbours(self):
        assert math.isnan(point_plane_variance(Scan(np.eye(3)), 0, radius=0.5))


class TestInvariance:
    """Test how MME / MPV respond to moving, scaling and blurring a map"""

    @pytest.mark.parametrize("seed", range(20))
    def test_rigid_motion(self, noisy_plane, seed):
        rng = np.random.default_rng(seed)
        cloud = Scan(noisy_plane.xyz[rng.choice(len(noisy_plane), 1500, replace=False)])
        pose = Pose6(*rng.uniform(-20, 20, 3), *rng.uniform(-math.pi, math.pi, 3))
        a = map_quality(cloud, radius=0.3)
        b = map_quality(transform_scan(cloud, pose), radius=0.3)
        assert b.mme == pytest.approx(a.mme, abs=1e-9)
        assert b.mpv == pytest.approx(a.mpv, abs=1e-9)

    @pytest.mark.parametrize("scale", [0.5, 2.0, 4.0])
    def test_scale_covariance(self, noisy_plane, scale):
        # power-of-two factors scale every coordinate exactly
        cloud = Scan(noisy_plane.xyz[:2000])
        a = map_quality(cloud, radius=0.3)
        b = map_quality(Scan(cloud.xyz * scale), radius=0.3 * scale)
        assert b.mme == pytest.approx(a.mme + 3.0 * math.log(scale), abs=1e-9)
        assert b.mpv == pytest.approx(a.mpv * scale, rel=1e-9)

    @pytest.mark.parametrize("seed", range(20))
    def test_more_noise_scores_worse(self, room, seed):
        reports = [map_quality(sample_scene(room, spacing=0.3, noise=noise, seed=seed), radius=0.6)
                   for noise in (0.005, 0.02, 0.05)]
        assert reports[0].mme < reports[1].mme < reports[2].mme
        assert reports[0].mpv < reports[1].mpv < reports[2].mpv


class TestMapQuality:
    """Test the map-level means"""

    def test_noisier_map_scores_worse(self):
        scene = room_scene()
        crisp = map_quality(sample_scene(scene, spacing=0.2, noise=0.01, seed=1), radius=0.6)
        blurred = map_quality(sample_scene(scene, spacing=0.2, noise=0.05, seed=1), radius=0.6)
        assert crisp.mme < blurred.mme
        assert crisp.mpv < blurred.mpv

    def test_pure_plane_has_no_entropy(self, caplog):
        xx, yy = np.meshgrid(np.arange(20) * 0.1, np.arange(20) * 0.1)
        plane = Scan(np.column_stack([xx.ravel(), yy.ravel(), np.zeros(400)]))
        with caplog.at_level(logging.WARNING):
            report = map_quality(plane, radius=0.5)
        assert math.isnan(report.mme)
        assert report.mpv < 1e-12
        assert report.skipped_points == 400
        assert "entropy undefined" in caplog.text

    def test_duplicated_map_keeps_mme(self, noisy_plane):
        cloud = Scan(noisy_plane.xyz[:3000])
        doubled = Scan(np.vstack([cloud.xyz, cloud.xyz]))
        a = map_quality(cloud, radius=0.3)
        b = map_quality(doubled, radius=0.3)
        assert b.mme == pytest.approx(a.mme, abs=1e-9)
        assert b.mpv == pytest.approx(a.mpv, rel=0.05)

    def test_skips_isolated_points(self, noisy_plane):
        cloud = Scan(np.vstack([noisy_plane.xyz[:2000], [[50.0, 50.0, 50.0]]]))
        report = map_quality(cloud, radius=0.3)
        assert report.skipped_points >= 1
        assert math.isnan(report.per_point_entropy[-1])
        assert np.isfinite(report.mme)

    def test_threads_do_not_change_result(self, noisy_plane):
        single = per_point_quality(noisy_plane, 0.2, threads=1)
        pooled = per_point_quality(noisy_plane, 0.2, threads=4)
        assert np.array_equal(single[0], pooled[0], equal_nan=True)
        assert np.array_equal(single[1], pooled[1], equal_nan=True)

    def test_degenerate_map(self):
        sparse = Scan(np.arange(30, dtype=float).reshape(10, 3) * 10)
        with pytest.raises(DegenerateMapError):
            map_quality(sparse, radius=1.0)

    def test_empty_map(self):
        with pytest.raises(EmptyCloudError):
            map_quality(Scan.empty())

    def test_export(self, tmp_path):
        cloud = Scan(np.vstack([np.random.default_rng(8).normal(0, 0.1, size=(20, 3)), [[9.0, 9.0, 9.0]]]))
        report = map_quality(cloud, radius=1.0)
        path = tmp_path / "points.csv"
        export_point_quality(cloud, report, path)
        df = pd.read_csv(path)
        assert list(df.columns) == ["x", "y", "z", "entropy", "plane_variance"]
        assert len(df) == 21
        assert "nan" in path.read_text().splitlines()[-1]
        assert np.isnan(df["entropy"].iloc[-1])
