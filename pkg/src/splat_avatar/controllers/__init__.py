# splat_avatar/controllers/__init__.py
"""
Controllers package
"""

from .cli_controller import CliController

__all__ = ["CliController"]
