"""
Unit tests for the run configuration
"""
import pytest

from lib.errors import ConfigError
from lib.run_config import RunConfig, load_run_config, parse_run_config, write_run_config


class TestDefaults:
    """Test the default protocol values"""

    def test_protocol_defaults(self):
        cfg = RunConfig()
        assert cfg.ndt_resolution == 1.0
        assert cfg.max_iterations == 50
        assert cfg.min_range == 3.0
        assert cfg.max_range == 200.0
        assert cfg.voxel_leaf_size == 2.0
        assert cfg.min_add_shift == 1.0
        assert cfg.error_threshold == 1.0
        assert cfg.quality_radius == 1.0

    def test_fitness_cap_follows_resolution(self):
        assert RunConfig(ndt_resolution=2.0).effective_fitness_cap == 2.0
        assert RunConfig(fitness_cap=0.5).effective_fitness_cap == 0.5

    def test_none_path_gives_defaults(self):
        assert load_run_config(None) == RunConfig()


class TestValidation:
    """Test invariant checks"""

    def test_resolution_must_be_positive(self):
        with pytest.raises(ConfigError, match="ndt_resolution"):
            RunConfig(ndt_resolution=0.0)

    def test_range_order(self):
        with pytest.raises(ConfigError, match="max_range"):
            RunConfig(min_range=10.0, max_range=5.0)

    def test_lists_every_problem(self):
        with pytest.raises(ConfigError) as info:
            RunConfig(max_iterations=0, quality_radius=-1.0, neighbor_search="all")
        assert len(info.value.problems) == 3

    def test_min_points_floor(self):
        with pytest.raises(ConfigError):
            RunConfig(min_points_per_voxel=3)


class TestParsing:
    """Test key = value files"""

    def test_parse_with_comments(self):
        cfg = parse_run_config("# protocol\nndt_resolution = 2.0\nmax_iterations = 30  # fewer\nseed=4\n")
        assert cfg.ndt_resolution == 2.0
        assert cfg.max_iterations == 30
        assert cfg.seed == 4

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_run_config("resolution = 1.0\n")

    def test_bad_value(self):
        with pytest.raises(ConfigError, match="max_iterations"):
            parse_run_config("max_iterations = many\n")

    def test_parse_and_invariant_problems_reported_together(self):
        with pytest.raises(ConfigError) as info:
            parse_run_config("bogus = 1\nndt_resolution = -1\nmax_iterations = many\n")
        problems = info.value.problems
        assert len(problems) == 3
        assert any("bogus" in p for p in problems)
        assert any("ndt_resolution" in p for p in problems)
        assert any("max_iterations" in p for p in problems)

    def test_config_error_is_value_error(self):
        with pytest.raises(ValueError):
            parse_run_config("bogus\n")

    def test_write_then_load(self, tmp_path):
        cfg = RunConfig(ndt_resolution=1.5, neighbor_search="neighbors27", seed=9)
        path = tmp_path / "run.cfg"
        write_run_config(cfg, path)
        assert load_run_config(path) == cfg
