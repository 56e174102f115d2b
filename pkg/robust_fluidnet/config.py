import os
from typing import Optional

DEFAULT_GRID_INTERVALS = 16
DEFAULT_SUBSTEPS = 8
DEFAULT_HORIZON = 5.0
DEFAULT_EPSILONS = [0.01, 0.02, 0.05, 0.1, 0.2]

SEED_ENV_VAR = "ROBUST_FLUIDNET_SEED"
LOG_LEVEL_ENV_VAR = "ROBUST_FLUIDNET_LOG_LEVEL"


class ConfigError(Exception):
    """Custom exception for environment configuration errors"""

    pass


def seed_from_env(default: Optional[int] = None) -> Optional[int]:
    """Base seed from ROBUST_FLUIDNET_SEED, or `default` when unset"""
    raw = os.getenv(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return default
    try:
        seed = int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")
    if seed < 0:
        raise ConfigError(f"{SEED_ENV_VAR} must be non-negative, got {seed}")
    return seed


def log_level_from_env(default: str = "WARNING") -> str:
    return os.getenv(LOG_LEVEL_ENV_VAR, default).upper()
