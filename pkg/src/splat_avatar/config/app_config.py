# config/app_config.py
import os
from dotenv import load_dotenv

load_dotenv()


def _default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


class Config:
    # App settings
    APP_TITLE = os.getenv("APP_TITLE", "Splat Avatar")
    APP_DESCRIPTION = os.getenv(
        "APP_DESCRIPTION", "Mesh-rigged Gaussian splat avatars from monocular sequences"
    )
    APP_VERSION = os.getenv("APP_VERSION", "0.1.0")

    # Output location for checkpoints, logs and reports
    OUT_DIR = os.getenv("SPLAT_AVATAR_OUT_DIR", "outputs")

    # Tile workers used by the rasterizer
    THREADS = int(os.getenv("SPLAT_AVATAR_THREADS", str(_default_threads())))

    # Slow experiments and benchmarks in the test-suite
    RUN_SLOW = os.getenv("SPLAT_AVATAR_RUN_SLOW", "0") == "1"

    # Logging
    LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
