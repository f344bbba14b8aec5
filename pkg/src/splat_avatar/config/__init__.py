# splat_avatar/config/__init__.py
"""
Configuration package
"""

from .app_config import Config
from .training_config import TrainingConfig, ViewSupervision

__all__ = [
    "Config",
    "TrainingConfig",
    "ViewSupervision",
]
