"""
Process Settings
================
Environment-driven settings shared by the CLI and the experiment runners.

Values are read from ``config/.env`` (see ``config/.env.example``):
- LOG_LEVEL:   loguru level for library logging (default INFO)
- RESULTS_DIR: where CSV/SVG outputs go (default results)
- MAX_WORKERS: process pool size for sweeps (default cpu count - 1)
"""

import os
import sys
from pathlib import Path

from dotenv import load_dotenv
from loguru import logger

project_root = Path(__file__).parent.parent.parent

# Load environment variables
load_dotenv(project_root / "config" / ".env")

LOG_FORMAT = (
    "<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | "
    "<cyan>{name}</cyan>:<cyan>{line}</cyan> - {message}"
)


def log_level() -> str:
    return os.getenv("LOG_LEVEL", "INFO").upper()


def results_dir() -> Path:
    return Path(os.getenv("RESULTS_DIR", "results"))


def max_workers() -> int:
    raw = os.getenv("MAX_WORKERS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            logger.warning(f"Ignoring non-integer MAX_WORKERS={raw!r}")
    return max(1, (os.cpu_count() or 2) - 1)


def setup_logging(level: str = None) -> None:
    """Replace loguru's default sink with a stderr sink at the given level."""
    logger.remove()
    logger.add(sys.stderr, level=(level or log_level()).upper(), format=LOG_FORMAT)
