# splat_avatar/exceptions/harness_exceptions.py
"""
Harness (config, files, datasets) exceptions
"""

from typing import Optional

from .base_exceptions import SplatAvatarError


class ConfigError(SplatAvatarError):
    """Invalid, missing or unknown configuration key"""

    category = "config"

    def __init__(self, message: str, key: Optional[str] = None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key


class IoError(SplatAvatarError):
    """File could not be read or written"""

    category = "io"

    def __init__(self, message: str, path: Optional[str] = None):
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
        self.path = path


class DatasetError(SplatAvatarError):
    """Dataset layout is incomplete or inconsistent"""

    category = "dataset"


class EmptyDataset(DatasetError):
    """No training frames available"""
