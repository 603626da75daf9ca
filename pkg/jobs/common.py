"""
Helpers shared by the bench jobs: path setup, banners, output tracking
"""
from __future__ import annotations

import logging
import shutil
import sys
from pathlib import Path
from typing import List, Optional, Union

# Allow direct imports from lib/ and config/
PROJECT_ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(PROJECT_ROOT))
sys.path.insert(0, str(PROJECT_ROOT / "config"))

import config  # noqa: E402
from lib.geometry import Pose6  # noqa: E402
from lib.run_config import RunConfig, load_run_config  # noqa: E402

logger = logging.getLogger("ndt_atlas.jobs")


def setup_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(level=level or config.LOG_LEVEL, format=config.LOG_FORMAT)


def banner(title: str, **fields) -> None:
    print("=" * 70)
    print(title)
    print("=" * 70)
    width = max((len(k) for k in fields), default=0)
    for key, value in fields.items():
        print(f"{key.ljust(width)} : {value}")


def parse_pose(text: str) -> Pose6:
    """'x,y,z,roll,pitch,yaw' (meters, radians) -> Pose6"""
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if len(parts) != 6:
        raise ValueError(f"pose needs 6 comma separated values, got {len(parts)}")
    return Pose6(*(float(p) for p in parts))


def parse_float_list(text: str) -> List[float]:
    return [float(p) for p in text.split(",") if p.strip()]


def resolve_run_config(path: Optional[str], seed: Optional[int]) -> RunConfig:
    cfg = load_run_config(path)
    if seed is not None:
        cfg = cfg.with_overrides(seed=seed)
    return cfg


class OutputTracker:
    """
    Records files and directories a run creates so a failed run can
    remove them; pre-existing paths are never touched
    """

    def __init__(self) -> None:
        self._paths: List[Path] = []

    def file(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        if not path.exists():
            self._paths.append(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def directory(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        if not path.exists():
            self._paths.append(path)
        path.mkdir(parents=True, exist_ok=True)
        return path

    def cleanup(self) -> None:
        for path in reversed(self._paths):
            if path.is_dir():
                shutil.rmtree(path, ignore_errors=True)
            elif path.exists():
                path.unlink()
            logger.info("removed partial output %s", path)
        self._paths.clear()
