# splat_avatar/exceptions/__init__.py
"""
Exceptions package
"""

from .base_exceptions import SplatAvatarError
from .geometry_exceptions import DegenerateTriangle
from .render_exceptions import IndexMismatch, ShapeMismatch, TooSmall
from .prior_exceptions import (
    BackendUnavailable,
    BadDimensions,
    IndexOutOfRange,
    MissingGroundTruth,
    OracleFailure,
)
from .harness_exceptions import ConfigError, DatasetError, EmptyDataset, IoError

__all__ = [
    "SplatAvatarError",
    "DegenerateTriangle",
    "ShapeMismatch",
    "IndexMismatch",
    "TooSmall",
    "BadDimensions",
    "BackendUnavailable",
    "IndexOutOfRange",
    "MissingGroundTruth",
    "OracleFailure",
    "ConfigError",
    "IoError",
    "DatasetError",
    "EmptyDataset",
]
