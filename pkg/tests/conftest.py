"""Pytest configuration for ensuring local packages are importable."""
import sys
from pathlib import Path

import numpy as np
import pytest

PROJECT_ROOT = Path(__file__).resolve().parent.parent
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))
if str(PROJECT_ROOT / "config") not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT / "config"))

from lib.geometry import Scan  # noqa: E402
from lib.simulator import corridor_scene, get_preset, room_scene, sample_scene, straight_drive  # noqa: E402


@pytest.fixture(scope="session")
def room():
    return room_scene()


@pytest.fixture(scope="session")
def room_cloud(room):
    """Noise-free 0.1 m sampling of the furnished room"""
    return sample_scene(room, spacing=0.1)


@pytest.fixture(scope="session")
def corridor():
    return corridor_scene(length=20.0)


@pytest.fixture(scope="session")
def corridor_drive(corridor):
    """30 HDL-64S2 scans along 20 m of corridor at 10 Hz, starting from rest"""
    return straight_drive(corridor, get_preset("HDL-64S2"), n_scans=30, length=20.0, ramp_scans=15)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def random_scan(rng, n=200, scale=10.0, frame_id="sensor"):
    return Scan(rng.uniform(-scale, scale, size=(n, 3)), intensity=rng.uniform(0, 255, n), frame_id=frame_id)
