"""Configuration and environment variable handling for horizonrec.

This module loads variables from a `.env` file if present in the project
root and exposes them via module attributes.  The model defaults (batch 512,
width 64, max length 200, 32 diffusion steps, c = 1.5, n = 2, K = 10) can be
overridden per run with a flat ``KEY=VALUE`` config file passed to ``--config``.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv

from horizonrec.exceptions import ConfigError

# ---------------------------------------------------------------------------
# .env loading
# ---------------------------------------------------------------------------

# Variables already defined in the environment are not overwritten.
_env_path = Path(__file__).resolve().parent.parent / ".env"
if _env_path.exists():
    load_dotenv(_env_path, override=False)


def _env_int(name: str, default: Optional[int]) -> Optional[int]:
    raw = os.environ.get(name)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"environment variable {name} must be an integer, got {raw!r}") from exc


# ---------------------------------------------------------------------------
# Runtime settings
# ---------------------------------------------------------------------------

# Caps torch intra-op parallelism.  None leaves the torch default untouched.
THREADS: Optional[int] = _env_int("HORIZONREC_THREADS", None)

LOG_LEVEL: str = os.environ.get("HORIZONREC_LOG_LEVEL", "INFO").upper()

# Fixed seed for retrieved-noise sampling during evaluation so reported
# metrics are reproducible.
EVAL_SEED: int = _env_int("HORIZONREC_EVAL_SEED", 2024)

# ---------------------------------------------------------------------------
# Model and training defaults
# ---------------------------------------------------------------------------

DEFAULT_BATCH_SIZE: int = 512
DEFAULT_HIDDEN_SIZE: int = 64
DEFAULT_MAX_LEN: int = 200
DEFAULT_NUM_LAYERS: int = 1
DEFAULT_DROPOUT: float = 0.2
DEFAULT_LEARNING_RATE: float = 1e-3
DEFAULT_EPOCHS: int = 200
DEFAULT_PATIENCE: int = 20

DEFAULT_STEPS: int = 32
DEFAULT_BETA_START: float = 1e-4
DEFAULT_BETA_END: float = 0.02

DEFAULT_FILTER_C: float = 1.5
DEFAULT_FILTER_N: float = 2.0
DEFAULT_WINDOW: int = 200
DEFAULT_TOP_K: int = 10

DEFAULT_FUSION_WEIGHT: float = 0.5
DEFAULT_DIFFUSION_WEIGHT: float = 0.5

DEFAULT_MIN_INTERACTIONS: int = 3
DEFAULT_METRIC_CUTOFFS = (5, 10, 20)

# Grid searched for w and lambda.
WEIGHT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 10))
TOP_K_GRID = (5, 10, 15)

# ---------------------------------------------------------------------------
# Synthetic data defaults
# ---------------------------------------------------------------------------

SYNTH_USERS: int = 200
SYNTH_ITEMS_PER_DOMAIN: int = 300
SYNTH_LATENT_DIM: int = 16
SYNTH_TEMPERATURE: float = 0.5
SYNTH_SEQ_LEN_RANGE = (10, 20)


def load_flat_config(path: os.PathLike | str) -> Dict[str, str]:
    """Read a flat ``KEY=VALUE`` config file.

    Blank lines and ``#`` comments are ignored.  Keys without a value are
    rejected so that typos surface early.

    Raises:
        FileNotFoundError: if ``path`` does not exist.
        ConfigError: if a key has no value.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    values = dotenv_values(path)
    missing = sorted(key for key, value in values.items() if value is None)
    if missing:
        raise ConfigError(f"{path}: keys without a value: {', '.join(missing)}")
    return {key: value for key, value in values.items() if value is not None}


__all__ = [
    "THREADS",
    "LOG_LEVEL",
    "EVAL_SEED",
    "DEFAULT_BATCH_SIZE",
    "DEFAULT_HIDDEN_SIZE",
    "DEFAULT_MAX_LEN",
    "DEFAULT_NUM_LAYERS",
    "DEFAULT_DROPOUT",
    "DEFAULT_LEARNING_RATE",
    "DEFAULT_EPOCHS",
    "DEFAULT_PATIENCE",
    "DEFAULT_STEPS",
    "DEFAULT_BETA_START",
    "DEFAULT_BETA_END",
    "DEFAULT_FILTER_C",
    "DEFAULT_FILTER_N",
    "DEFAULT_WINDOW",
    "DEFAULT_TOP_K",
    "DEFAULT_FUSION_WEIGHT",
    "DEFAULT_DIFFUSION_WEIGHT",
    "DEFAULT_MIN_INTERACTIONS",
    "DEFAULT_METRIC_CUTOFFS",
    "WEIGHT_GRID",
    "TOP_K_GRID",
    "SYNTH_USERS",
    "SYNTH_ITEMS_PER_DOMAIN",
    "SYNTH_LATENT_DIM",
    "SYNTH_TEMPERATURE",
    "SYNTH_SEQ_LEN_RANGE",
    "load_flat_config",
]
