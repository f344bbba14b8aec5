# splat_avatar/dependencies/service_dependencies.py
"""
Shared inputs resolved for every CLI command
"""

from pathlib import Path
from typing import Iterable, Optional

from ..config.app_config import Config
from ..config.training_config import TrainingConfig
from ..core.config_loader import ConfigLoader
from ..models.harness_model import Dataset
from ..services.dataset_service import load_dataset


def get_config(config_file: Optional[str], overrides: Iterable[str] = ()) -> TrainingConfig:
    """Config file (or the built-in defaults) with --set overrides applied"""
    return ConfigLoader.load(config_file, overrides)


def get_dataset(root: str) -> Dataset:
    return load_dataset(root)


def get_workers(threads: Optional[int]) -> int:
    return threads if threads else Config.THREADS


def get_out_dir(out: Optional[str]) -> Path:
    return Path(out) if out else Path(Config.OUT_DIR)
