import logging
import os
from typing import Optional

from dotenv import load_dotenv

load_dotenv()

_DEFAULTS = {
    "seed": "20190601",
    "enum_cap": "10000000",
    "mc_samples": "1000000",
    "log_level": "WARNING",
    "debug": "0",
}


def _cfg(key: str, default: Optional[str] = None) -> Optional[str]:
    """
    Read a setting from the environment first (AUCTIONSEP_* vars), then fall
    back to the built-in defaults. A local .env file is honoured via dotenv.
    """
    env_map = {
        "seed": "AUCTIONSEP_SEED",
        "enum_cap": "AUCTIONSEP_ENUM_CAP",
        "mc_samples": "AUCTIONSEP_MC_SAMPLES",
        "log_level": "AUCTIONSEP_LOG_LEVEL",
        "debug": "AUCTIONSEP_DEBUG",
    }
    env_key = env_map.get(key)
    value = os.getenv(env_key) if env_key else None
    return value or _DEFAULTS.get(key, default)


def _cfg_int(key: str) -> int:
    raw = _cfg(key)
    try:
        return int(raw)
    except (TypeError, ValueError):
        raise ValueError(f"setting {key!r} must be an integer, got {raw!r}")


def default_seed() -> int:
    return _cfg_int("seed")


def default_enumeration_cap() -> int:
    return _cfg_int("enum_cap")


def default_mc_samples() -> int:
    return _cfg_int("mc_samples")


def log_level() -> int:
    if _cfg("debug") == "1":
        return logging.DEBUG
    name = (_cfg("log_level") or "WARNING").upper()
    level = logging.getLevelName(name)
    return level if isinstance(level, int) else logging.WARNING


def configure_logging(verbose: bool = False) -> None:
    """Route library logs to stderr; stdout carries results only."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else log_level(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
