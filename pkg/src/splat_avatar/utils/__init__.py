# splat_avatar/utils/__init__.py
"""
Utilities package
"""

from .logging_utils import logger

__all__ = ['logger']
