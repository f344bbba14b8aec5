# splat_avatar/dependencies/__init__.py
"""
Dependencies package
"""

from .service_dependencies import get_config, get_dataset, get_out_dir, get_workers

__all__ = ["get_config", "get_dataset", "get_out_dir", "get_workers"]
