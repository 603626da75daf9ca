"""
Per-run pipeline configuration

A flat ``key = value`` text file. Every key defaults to the published
mapping/localization protocol, so an empty file reproduces it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from types import SimpleNamespace
from typing import Dict, List, Union

from .errors import ConfigError

logger = logging.getLogger(__name__)

NEIGHBOR_SEARCH_MODES = ("single", "neighbors27")
DERIVATIVE_MODES = ("analytic", "numeric")
INITIAL_GUESS_MODES = ("constant_velocity", "previous")


@dataclass(frozen=True)
class RunConfig:
    """
    Pipeline parameters

    Lengths are meters, angles radians. ``voxel_leaf_size`` is the input
    down-sampling leaf used by the localizer; mapping uses ``map_leaf_size``.
    ``min_range`` gates mapping input, ``loc_min_range`` gates localization
    input. ``fitness_cap`` of 0 means "use ndt_resolution".
    """

    ndt_resolution: float = 1.0
    max_iterations: int = 50
    min_range: float = 3.0
    max_range: float = 200.0
    voxel_leaf_size: float = 2.0
    min_add_shift: float = 1.0
    error_threshold: float = 1.0
    quality_radius: float = 1.0
    seed: int = 0

    map_leaf_size: float = 0.5
    loc_min_range: float = 0.0
    min_points_per_voxel: int = 6
    convergence_epsilon: float = 1e-3
    neighbor_search: str = "single"
    fitness_cap: float = 0.0
    step_clamp_translation: float = 1.0
    step_clamp_rotation: float = 0.2
    rebuild_growth: float = 0.2
    derivatives: str = "analytic"
    initial_guess: str = "constant_velocity"

    def __post_init__(self):
        problems = validate(self)
        if problems:
            raise ConfigError(problems)

    @property
    def effective_fitness_cap(self) -> float:
        return self.fitness_cap if self.fitness_cap > 0 else self.ndt_resolution

    def to_dict(self) -> Dict[str, Union[int, float, str]]:
        return asdict(self)

    def with_overrides(self, **overrides) -> "RunConfig":
        return replace(self, **overrides)


def validate(cfg: RunConfig) -> List[str]:
    """Return every problem found; empty list means valid"""
    problems = []
    positive = (
        "ndt_resolution", "max_range", "voxel_leaf_size", "min_add_shift",
        "error_threshold", "quality_radius", "map_leaf_size",
        "convergence_epsilon", "step_clamp_translation", "step_clamp_rotation",
    )
    for name in positive:
        value = getattr(cfg, name)
        if not (isinstance(value, (int, float)) and value > 0):
            problems.append(f"{name} must be > 0 (got {value!r})")
    for name in ("min_range", "loc_min_range", "fitness_cap", "rebuild_growth"):
        value = getattr(cfg, name)
        if not (isinstance(value, (int, float)) and value >= 0 and math.isfinite(value)):
            problems.append(f"{name} must be >= 0 (got {value!r})")
    if isinstance(cfg.max_range, (int, float)) and isinstance(cfg.min_range, (int, float)):
        if cfg.max_range <= cfg.min_range:
            problems.append(f"max_range must exceed min_range ({cfg.max_range!r} <= {cfg.min_range!r})")
        if isinstance(cfg.loc_min_range, (int, float)) and cfg.max_range <= cfg.loc_min_range:
            problems.append("max_range must exceed loc_min_range")
    if not (isinstance(cfg.max_iterations, int) and cfg.max_iterations >= 1):
        problems.append(f"max_iterations must be >= 1 (got {cfg.max_iterations!r})")
    if not (isinstance(cfg.min_points_per_voxel, int) and cfg.min_points_per_voxel >= 4):
        problems.append(f"min_points_per_voxel must be >= 4 (got {cfg.min_points_per_voxel!r})")
    if not isinstance(cfg.seed, int):
        problems.append(f"seed must be an integer (got {cfg.seed!r})")
    if cfg.neighbor_search not in NEIGHBOR_SEARCH_MODES:
        problems.append(f"neighbor_search must be one of {NEIGHBOR_SEARCH_MODES}")
    if cfg.derivatives not in DERIVATIVE_MODES:
        problems.append(f"derivatives must be one of {DERIVATIVE_MODES}")
    if cfg.initial_guess not in INITIAL_GUESS_MODES:
        problems.append(f"initial_guess must be one of {INITIAL_GUESS_MODES}")
    return problems


def _coerce(name: str, raw: str, kind):
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_run_config(text: str, source: str = "<string>") -> RunConfig:
    """
    Parse ``key = value`` lines into a RunConfig

    Raises:
        ConfigError listing every unknown key, bad value and failed invariant.
    """
    kinds = {f.name: f.type for f in fields(RunConfig)}
    type_map = {"int": int, "float": float, "str": str}
    values = {}
    problems = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            problems.append(f"{source}:{lineno}: expected key = value")
            continue
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in kinds:
            problems.append(f"{key}: unknown key")
            continue
        kind = type_map.get(kinds[key], str)
        try:
            values[key] = _coerce(key, raw, kind)
        except ValueError:
            problems.append(f"{key}: cannot parse {raw!r} as {kind.__name__}")

    # invariant checks run on the parsed subset so one error lists everything
    candidate = SimpleNamespace(**{**RunConfig().to_dict(), **values})
    problems.extend(validate(candidate))
    if problems:
        raise ConfigError(problems)
    return RunConfig(**values)


def load_run_config(path: Union[str, Path, None]) -> RunConfig:
    """Read a .cfg file; None gives the default protocol"""
    if path is None:
        return RunConfig()
    path = Path(path)
    logger.debug("loading run config %s", path)
    return parse_run_config(path.read_text(), source=str(path))


def write_run_config(cfg: RunConfig, path: Union[str, Path]) -> None:
    """Write every key so the file is a full snapshot"""
    lines = ["# ndt-atlas run configuration"]
    for name, value in cfg.to_dict().items():
        if isinstance(value, float):
            value = f"{value:.9g}"
        lines.append(f"{name} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
