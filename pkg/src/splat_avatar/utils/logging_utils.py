# splat_avatar/utils/logging_utils.py
"""
Logging configuration - Class-based logger
"""

import logging
from typing import Dict, Optional

from ..config.app_config import Config


class Logger:
    """
        Application logger with training helpers

        from ..utils.logging_utils import logger

        # In services:
        logger.log_training_start(1280, 6000, "diffusion_like")
        logger.log_iteration(300, {"total": 0.083}, 1544)

        # Anywhere else:
        logger.info("Dataset loaded")
        logger.warning("Skipped 2 degenerate faces")
    """

    def __init__(self, name: str = "splat_avatar"):
        self.train_logger = logging.getLogger(f"{name}.train")
        self.app_logger = logging.getLogger(f"{name}.app")

        # Configure logger if not already configured
        if not self.app_logger.handlers:
            self._setup_logging()

    def _setup_logging(self):
        """Setup logging configuration"""
        formatter = logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        )

        console_handler = logging.StreamHandler()
        console_handler.setFormatter(formatter)

        self.train_logger.addHandler(console_handler)
        self.app_logger.addHandler(console_handler)

        level = getattr(logging, Config.LOG_LEVEL.upper(), logging.INFO)
        self.train_logger.setLevel(level)
        self.app_logger.setLevel(level)

    # Logging methods that can be used throughout the app
    def info(self, message: str, train_log: bool = False):
        """Log info message"""
        if train_log:
            self.train_logger.info(message)
        else:
            self.app_logger.info(message)

    def warning(self, message: str, train_log: bool = False):
        """Log warning message"""
        if train_log:
            self.train_logger.warning(message)
        else:
            self.app_logger.warning(message)

    def error(self, message: str, train_log: bool = False):
        """Log error message"""
        if train_log:
            self.train_logger.error(message)
        else:
            self.app_logger.error(message)

    def debug(self, message: str, train_log: bool = False):
        """Log debug message"""
        if train_log:
            self.train_logger.debug(message)
        else:
            self.app_logger.debug(message)

    def log_service_startup(self, service_name: str, details: Optional[str] = None):
        """Log service startup"""
        message = f"✅ {service_name} initialized"
        if details:
            message += f" - {details}"
        self.app_logger.info(message)

    def log_service_error(self, service_name: str, error: str):
        """Log service error"""
        self.app_logger.error(f"❌ {service_name} error: {error}")

    def log_training_start(self, splat_count: int, iterations: int, supervision: str):
        """Log training start"""
        self.train_logger.info(
            f"🔄 Training {splat_count} splats for {iterations} iterations - "
            f"view supervision: {supervision}"
        )

    def log_iteration(self, iteration: int, losses: Dict[str, float], splat_count: int):
        """Log training progress"""
        terms = " ".join(f"{name}={value:.5f}" for name, value in losses.items())
        self.train_logger.info(f"[{iteration:05d}] {terms} splats={splat_count}")

    def log_densify(self, iteration: int, cloned: int, split: int, pruned: int, total: int):
        """Log a densification event"""
        self.train_logger.info(
            f"🌱 Densify @ {iteration}: +{cloned} cloned, +{split} split, "
            f"-{pruned} pruned -> {total} splats"
        )

    def log_training_complete(self, iterations: int, time_taken: float, splat_count: int):
        """Log training completion"""
        self.train_logger.info(
            f"✅ Trained {iterations} iterations - "
            f"Time: {time_taken:.2f}s - "
            f"Splats: {splat_count}"
        )

    def log_eval_complete(self, split: str, images: int, psnr: float, ssim: float):
        """Log evaluation completion"""
        self.app_logger.info(
            f"✅ Evaluated {split}: {images} images - PSNR {psnr:.2f} dB - SSIM {ssim:.4f}"
        )

    def log_dataset_written(self, root: str, images: int):
        """Log dataset synthesis"""
        self.app_logger.info(f"✅ Dataset written: {root} ({images} images)")


# Create global logger instance
logger = Logger()
