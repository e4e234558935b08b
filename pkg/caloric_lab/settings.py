"""Environment-driven settings and logging setup."""

from __future__ import annotations

import logging
import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _int_env(name: str, default: int) -> int:
    try:
        return int(os.getenv(name, str(default)))
    except ValueError:
        return default


OUTPUT_DIR = Path(os.getenv("CALORIC_OUTPUT_DIR", "runs"))
LOG_LEVEL = os.getenv("CALORIC_LOG_LEVEL", "INFO").upper()
THREADS = max(1, _int_env("CALORIC_THREADS", 1))
MAX_MONOMIALS = _int_env("CALORIC_MAX_MONOMIALS", 3000)
SEED = _int_env("CALORIC_SEED", 0)


def configure_logging(level: str | int | None = None) -> None:
    """Configure root logging for command line runs."""

    logging.basicConfig(level=level or LOG_LEVEL, format=LOG_FORMAT)
    if level is not None:
        logging.getLogger().setLevel(level)


def resolve_under_output(*parts: str) -> Path:
    """Return a path rooted under the configured output directory."""

    return OUTPUT_DIR.joinpath(*parts)
