# splat_avatar/routes/__init__.py
"""
Routes package
"""

from .cli_routes import build_parser, run

__all__ = ["build_parser", "run"]
