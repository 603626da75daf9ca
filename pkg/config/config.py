"""
Configuration settings for ndt-atlas
"""
import os
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()

# Project paths
PROJECT_ROOT = Path(__file__).parent.parent
CONFIG_DIR = PROJECT_ROOT / "config"
JOBS_DIR = PROJECT_ROOT / "jobs"
LIB_DIR = PROJECT_ROOT / "lib"
OUT_DIR = Path(os.getenv("NDT_ATLAS_OUT_DIR", str(PROJECT_ROOT / "out")))

# Ensure directories exist
OUT_DIR.mkdir(parents=True, exist_ok=True)

# Logging
LOG_LEVEL = os.getenv("NDT_ATLAS_LOG", "INFO").upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Worker threads for per-point map quality
DEFAULT_THREADS = max(1, int(os.getenv("NDT_ATLAS_THREADS", "1")))

# Published mapping / localization protocol (RunConfig defaults)
PUBLISHED_PROTOCOL = {
    "ndt_resolution": 1.0,      # m, ND voxel size
    "max_iterations": 50,
    "min_range": 3.0,           # m, mapping input
    "max_range": 200.0,         # m
    "min_add_shift": 1.0,       # m, map addition gate
    "voxel_leaf_size": 2.0,     # m, localization input filter
    "error_threshold": 1.0,     # m, localization jump gate
    "quality_radius": 1.0,      # m, MME / MPV neighbourhood
}

# Sensors used for the beam-count sweep (fewest to most channels)
SWEEP_PRESETS = ["VLP-16", "VLP-32C", "Pandar-64", "VLS-128"]

# Range gates compared by `downsample --sweep`
RANGE_SWEEP = [200.0, 100.0, 50.0, 20.0]
