"""
Runtime Configuration
Centralized environment settings for aigdiff jobs.
"""

import os
import logging
from enum import Enum
from typing import Optional

logger = logging.getLogger(__name__)


class Environment(str, Enum):
    """Deployment environment."""

    DEVELOPMENT = "development"  # Warn and continue on bad settings
    PRODUCTION = "production"  # Fail fast on bad settings


class AppConfig:
    """
    Runtime configuration loaded from environment variables.

    Experiment hyperparameters live in pydantic models (see models/configs.py);
    this object only carries process-level knobs shared by every subcommand.
    """

    def __init__(self):
        # === Environment ===
        self.environment = self._get_environment()

        # === Parallelism ===
        self.threads = self._get_threads()

        # === Logging ===
        self.log_level = os.getenv("AIGDIFF_LOG_LEVEL", "INFO").upper()
        self.log_file = os.getenv("AIGDIFF_LOG_FILE") or None

        self._log_config()

    def _get_environment(self) -> Environment:
        mode_str = os.getenv("AIGDIFF_ENVIRONMENT", "development").lower().strip()
        if mode_str not in [e.value for e in Environment]:
            logger.warning(
                f"Invalid AIGDIFF_ENVIRONMENT='{mode_str}'. Defaulting to 'development'."
            )
            return Environment.DEVELOPMENT
        return Environment(mode_str)

    def _get_threads(self) -> int:
        """
        Determine worker thread count.

        Priority:
        1. SEADAG_THREADS env var
        2. Default to 1 (deterministic serial mode)
        """
        raw = os.getenv("SEADAG_THREADS", "").strip()
        if not raw:
            return 1
        try:
            return int(raw)
        except ValueError:
            logger.warning(f"Invalid SEADAG_THREADS='{raw}'. Defaulting to 1.")
            return 1

    def _log_config(self):
        """Log current configuration."""
        logger.debug("=" * 60)
        logger.debug("aigdiff Runtime Configuration")
        logger.debug("=" * 60)
        logger.debug(f"Environment:        {self.environment.value}")
        logger.debug(f"Threads:            {self.threads}")
        logger.debug(f"Log Level:          {self.log_level}")
        logger.debug(f"Log File:           {self.log_file or 'Not Set'}")
        logger.debug("=" * 60)

    @property
    def is_production(self) -> bool:
        return self.environment == Environment.PRODUCTION

    def validate(self) -> list[str]:
        """
        Validate configuration and return list of errors.

        Returns:
            List of error messages (empty if valid)
        """
        errors = []

        if self.threads < 1:
            errors.append(f"SEADAG_THREADS must be >= 1, got {self.threads}")

        if not isinstance(logging.getLevelName(self.log_level), int):
            errors.append(f"AIGDIFF_LOG_LEVEL '{self.log_level}' is not a logging level")

        return errors


# Global config instance
_config: Optional[AppConfig] = None


def get_config(force_reload: bool = False) -> AppConfig:
    """
    Get runtime configuration singleton.

    Args:
        force_reload: Force reload from environment (for testing)

    Returns:
        AppConfig instance
    """
    global _config

    if _config is None or force_reload:
        _config = AppConfig()

        errors = _config.validate()
        if errors:
            logger.error("Configuration errors:")
            for error in errors:
                logger.error(f"  - {error}")

            # In production, fail fast
            if _config.is_production:
                raise ValueError(f"Invalid configuration: {errors}")
            else:
                logger.warning("Continuing with invalid config in development mode")
                if _config.threads < 1:
                    _config.threads = 1

    return _config


def reset_config():
    """Reset config singleton (for testing)."""
    global _config
    _config = None
