"""
NDT Atlas Library
NDT mapping, localization and map-quality benchmarking over LiDAR scans
"""

__version__ = "0.1.0"

# Errors
from .errors import (
    NdtAtlasError,
    ConfigError,
    FormatError,
    EmptyCloudError,
    DegenerateMapError,
    OptimizationBreakdown,
)

# Core geometry
from .geometry import (
    Point,
    Scan,
    Pose6,
    compose,
    inverse,
    relative,
    to_matrix,
    from_matrix,
    transform_scan,
    pose_difference,
)

# IO and configuration
from .pcd_io import read_scan, write_scan, read_trajectory, write_trajectory, list_scan_files
from .run_config import RunConfig, load_run_config, write_run_config

# Preprocessing
from .preprocess import VoxelKey, range_filter, voxel_grid_filter, preprocess_scan, range_sweep

# Registration
from .nd_grid import NDVoxel, NDVoxelGrid, build_nd_grid, update_nd_grid
from .ndt import RegistrationResult, score, score_derivatives, newton_align, fitness_metrics

# Pipelines
from .mapping import (
    MapBuildState,
    map_init,
    map_step,
    build_map,
    elevation_series,
    elevation_error_series,
    pose_errors,
)
from .localization import LocalizerState, localizer_init, localize_step
from .map_quality import (
    MapQualityReport,
    point_entropy,
    point_plane_variance,
    map_quality,
    export_point_quality,
)

# Simulation
from .simulator import (
    SensorPreset,
    SENSOR_PRESETS,
    Scene,
    Primitive,
    GroundTruthDrive,
    get_preset,
    load_preset,
    simulate_scan,
    simulate_drive,
    sample_scene,
    room_scene,
    corridor_scene,
    straight_drive,
    read_scene,
    write_scene,
)

# Reporting
from .reporting import RunReport, aggregate_stats, summary_table

__all__ = [
    # Errors
    "NdtAtlasError",
    "ConfigError",
    "FormatError",
    "EmptyCloudError",
    "DegenerateMapError",
    "OptimizationBreakdown",
    # Geometry
    "Point",
    "Scan",
    "Pose6",
    "compose",
    "inverse",
    "relative",
    "to_matrix",
    "from_matrix",
    "transform_scan",
    "pose_difference",
    # IO / config
    "read_scan",
    "write_scan",
    "read_trajectory",
    "write_trajectory",
    "list_scan_files",
    "RunConfig",
    "load_run_config",
    "write_run_config",
    # Preprocessing
    "VoxelKey",
    "range_filter",
    "voxel_grid_filter",
    "preprocess_scan",
    "range_sweep",
    # Registration
    "NDVoxel",
    "NDVoxelGrid",
    "build_nd_grid",
    "update_nd_grid",
    "RegistrationResult",
    "score",
    "score_derivatives",
    "newton_align",
    "fitness_metrics",
    # Pipelines
    "MapBuildState",
    "map_init",
    "map_step",
    "build_map",
    "elevation_series",
    "elevation_error_series",
    "pose_errors",
    "LocalizerState",
    "localizer_init",
    "localize_step",
    "MapQualityReport",
    "point_entropy",
    "point_plane_variance",
    "map_quality",
    "export_point_quality",
    # Simulation
    "SensorPreset",
    "SENSOR_PRESETS",
    "Scene",
    "Primitive",
    "GroundTruthDrive",
    "get_preset",
    "load_preset",
    "simulate_scan",
    "simulate_drive",
    "sample_scene",
    "room_scene",
    "corridor_scene",
    "straight_drive",
    "read_scene",
    "write_scene",
    # Reporting
    "RunReport",
    "aggregate_stats",
    "summary_table",
]
