# splat_avatar/main.py
"""
Command-line application - Entry point
"""

import sys
from typing import List, Optional

from .config.app_config import Config
from .core.service_manager import cleanup_services, initialize_services
from .routes.cli_routes import run
from .utils.logging_utils import logger


def main(argv: Optional[List[str]] = None) -> int:
    """Start the tile pools, run one sub-command, shut the pools down"""
    try:
        initialize_services(Config.THREADS)
    except Exception as e:
        logger.error(f"❌ Application startup failed: {e}")
        raise e
    try:
        return run(argv)
    finally:
        cleanup_services()


if __name__ == "__main__":
    sys.exit(main())
