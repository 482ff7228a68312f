"""
Settings and logging for qkdsim.

Values come from the process environment, optionally pre-loaded from a
``.env`` file in the working directory (see ``.env.example``).
"""

import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

from exceptions import ConfigError

load_dotenv()

LOG_FORMAT = "[%(asctime)s] %(levelname)s: %(name)s: %(message)s"
ROOT_LOGGER = "qkdsim"

_configured = False


def env_str(name: str, default: Optional[str] = None) -> Optional[str]:
    value = os.getenv(name)
    if value is None or value.strip() == "":
        return default
    return value.strip()


def env_int(name: str, default: int) -> int:
    value = env_str(name)
    if value is None:
        return default
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {value!r}")


def env_float(name: str, default: float) -> float:
    value = env_str(name)
    if value is None:
        return default
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {value!r}")


@dataclass
class SimSettings:
    log_level: str = "INFO"
    log_file: Optional[str] = None
    default_seed: int = 20240229
    workers: int = 1
    output_dir: str = "results"

    @classmethod
    def from_env(cls) -> "SimSettings":
        """Read settings from QKDSIM_* environment variables"""
        settings = cls(
            log_level=env_str("QKDSIM_LOG_LEVEL", "INFO").upper(),
            log_file=env_str("QKDSIM_LOG_FILE"),
            default_seed=env_int("QKDSIM_SEED", cls.default_seed),
            workers=env_int("QKDSIM_WORKERS", cls.workers),
            output_dir=env_str("QKDSIM_OUTPUT_DIR", cls.output_dir),
        )
        if settings.workers < 1:
            raise ConfigError(f"QKDSIM_WORKERS must be >= 1, got {settings.workers}")
        if not isinstance(logging.getLevelName(settings.log_level), int):
            raise ConfigError(f"Unknown QKDSIM_LOG_LEVEL {settings.log_level!r}")
        return settings


def configure_logging(settings: Optional[SimSettings] = None, level: Optional[str] = None) -> logging.Logger:
    """
    Configure the ``qkdsim`` logger hierarchy.

    Args:
        settings: settings to use; read from the environment when omitted
        level: overrides ``settings.log_level`` (the CLI ``--log-level`` flag)

    Returns:
        The configured root ``qkdsim`` logger
    """
    global _configured
    settings = settings or SimSettings.from_env()
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel((level or settings.log_level).upper())

    if not _configured:
        formatter = logging.Formatter(LOG_FORMAT, datefmt="%Y-%m-%d %H:%M:%S")

        stream_handler = logging.StreamHandler(sys.stderr)
        stream_handler.setFormatter(formatter)
        logger.addHandler(stream_handler)

        if settings.log_file:
            log_path = Path(settings.log_file)
            log_path.parent.mkdir(parents=True, exist_ok=True)
            file_handler = logging.FileHandler(log_path, encoding="utf-8")
            file_handler.setFormatter(formatter)
            logger.addHandler(file_handler)

        logger.propagate = False
        _configured = True

    return logger


def get_logger(name: str) -> logging.Logger:
    """Child of the ``qkdsim`` logger, e.g. ``qkdsim.qkd_protocol``"""
    return logging.getLogger(f"{ROOT_LOGGER}.{name}")
