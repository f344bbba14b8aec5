# splat_avatar/core/service_manager.py
"""
Service lifecycle management - tile worker pools shared by the rasterizer
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Optional

from ..config.app_config import Config
from ..utils.logging_utils import logger

# Global instances, one pool per worker count
_tile_executors: Dict[int, ThreadPoolExecutor] = {}


def initialize_services(threads: Optional[int] = None):
    """Create the default tile pool"""
    workers = threads or Config.THREADS
    try:
        get_tile_executor(workers)
        logger.log_service_startup("Tile rasterizer", f"{workers} worker(s)")
    except Exception as e:
        logger.log_service_error("Tile rasterizer", str(e))
        raise e


def cleanup_services():
    """Shut down every tile pool"""
    logger.debug("🔄 Shutting down tile pools...")
    for executor in _tile_executors.values():
        executor.shutdown(wait=True)
    _tile_executors.clear()


def get_tile_executor(workers: Optional[int] = None) -> Optional[ThreadPoolExecutor]:
    """Tile pool for `workers` threads; None means tiles run serially on the caller"""
    workers = workers or Config.THREADS
    if workers <= 1:
        return None
    if workers not in _tile_executors:
        _tile_executors[workers] = ThreadPoolExecutor(
            max_workers=workers, thread_name_prefix=f"tiles{workers}"
        )
    return _tile_executors[workers]
