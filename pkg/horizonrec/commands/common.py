"""Argument helpers shared by the command modules."""

from __future__ import annotations

import argparse
import logging
from typing import Dict, List, Optional

from horizonrec.config import load_flat_config
from horizonrec.exceptions import ConfigError
from horizonrec.helpers.model_utils import TrainConfig, apply_ablation
from horizonrec.helpers.run_utils import resolve_seed

logger = logging.getLogger(__name__)

# argparse dests that share their TrainConfig field name
CONFIG_FLAGS = (
    "variant",
    "epochs",
    "steps",
    "beta_start",
    "beta_end",
    "top_k",
    "fusion_weight",
    "diffusion_weight",
    "batch_size",
    "hidden_size",
    "max_len",
    "learning_rate",
    "patience",
)


def add_model_flags(parser: argparse.ArgumentParser) -> None:
    """Flags that override individual ``TrainConfig`` fields."""
    parser.add_argument("--config", help="flat KEY=VALUE file with TrainConfig fields")
    parser.add_argument("--seed", type=int, help="run seed (random and logged when omitted)")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--steps", type=int, help="diffusion steps T")
    parser.add_argument("--beta-start", type=float)
    parser.add_argument("--beta-end", type=float)
    parser.add_argument("--top-k", type=int, help="retrieved segments K (0 = Gaussian noise)")
    parser.add_argument("--fusion-weight", type=float, help="w in the final fusion")
    parser.add_argument("--diffusion-weight", type=float, help="lambda on the diffusion loss")
    parser.add_argument("--batch-size", type=int)
    parser.add_argument("--hidden-size", type=int)
    parser.add_argument("--max-len", type=int)
    parser.add_argument("--learning-rate", type=float)
    parser.add_argument("--patience", type=int)
    parser.add_argument("--freeze-encoders", action="store_true", default=None)


def build_train_config(args: argparse.Namespace) -> TrainConfig:
    """Merge defaults, the ``--config`` file and explicit flags (in that order)."""
    config = TrainConfig()
    file_values: Dict[str, str] = {}
    if getattr(args, "config", None):
        file_values = load_flat_config(args.config)
        config = TrainConfig.from_mapping(file_values, base=config)
    overrides: Dict[str, object] = {}
    for name in CONFIG_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "freeze_encoders", None):
        overrides["freeze_encoders"] = True
    if overrides:
        config = TrainConfig.from_mapping(overrides, base=config)
    seed = getattr(args, "seed", None)
    if seed is None and "seed" in file_values:
        seed = config.seed
    return TrainConfig.from_mapping({"seed": resolve_seed(seed)}, base=config)


def needs_database(config: TrainConfig) -> bool:
    return config.top_k > 0 and apply_ablation(config.variant).use_retrieval


def require_database(config: TrainConfig, db_path: Optional[str]) -> None:
    if db_path is None and needs_database(config):
        raise ConfigError(f"variant {config.variant} with top_k={config.top_k} needs --db")


def parse_int_list(text: str) -> List[int]:
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise ConfigError("expected at least one integer")
    return values
