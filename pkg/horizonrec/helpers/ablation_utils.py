"""Ablation and sensitivity grids: variant x setting x seed training runs."""

from __future__ import annotations

import dataclasses
import logging
from typing import Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from horizonrec.config import DEFAULT_METRIC_CUTOFFS, TOP_K_GRID, WEIGHT_GRID
from horizonrec.exceptions import ConfigError
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.encoder_utils import SequenceEncoder
from horizonrec.helpers.eval_utils import evaluate
from horizonrec.helpers.model_utils import AblationVariant, TrainConfig
from horizonrec.helpers.retrieval_utils import RetrievalDatabase
from horizonrec.helpers.training_utils import train

logger = logging.getLogger(__name__)

SWEEPABLE = ("fusion_weight", "diffusion_weight", "top_k", "steps")
DEFAULT_GRIDS = {"fusion_weight": WEIGHT_GRID, "diffusion_weight": WEIGHT_GRID, "top_k": TOP_K_GRID}


def parse_sweep(text: str) -> Tuple[str, List[float]]:
    """Parse ``name=v1,v2,...`` into a parameter name and its values.

    A bare ``fusion_weight``, ``diffusion_weight`` or ``top_k`` sweeps the
    default grid for that parameter.
    """
    name, sep, values = text.partition("=")
    name = name.strip()
    if name not in SWEEPABLE:
        raise ConfigError(f"sweep must look like NAME=v1,v2 with NAME in {', '.join(SWEEPABLE)}; got {text!r}")
    if not sep:
        if name not in DEFAULT_GRIDS:
            raise ConfigError(f"sweep over {name} needs explicit values: {name}=v1,v2")
        return name, [float(v) for v in DEFAULT_GRIDS[name]]
    try:
        parsed = [float(v) for v in values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"sweep values must be numbers: {values!r}") from None
    if not parsed:
        raise ConfigError(f"sweep {name} has no values")
    return name, parsed


def _settings(sweep: Optional[Tuple[str, Sequence[float]]]) -> List[Dict[str, float]]:
    if sweep is None:
        return [{}]
    name, values = sweep
    cast = int if name in ("top_k", "steps") else float
    return [{name: cast(value)} for value in values]


def run_grid(
    dataset: CrossDomainDataset,
    encoders: Optional[Mapping[str, SequenceEncoder]],
    database: Optional[RetrievalDatabase],
    base_config: TrainConfig,
    variants: Iterable[str | AblationVariant],
    seeds: Sequence[int],
    sweep: Optional[Tuple[str, Sequence[float]]] = None,
    split: str = "test",
    ks: Sequence[int] = DEFAULT_METRIC_CUTOFFS,
    callback: Optional[Callable[[Dict[str, object]], None]] = None,
) -> pd.DataFrame:
    """Train and evaluate every (variant, setting, seed) combination.

    Returns one row per run with the variant, the swept parameter and value
    (if any), the seed, the best epoch and each HR/NDCG cutoff.
    """
    variants = [AblationVariant(v).value for v in variants]
    if not variants or not seeds:
        raise ValueError("the grid needs at least one variant and one seed")
    rows: List[Dict[str, object]] = []
    for variant in variants:
        for setting in _settings(sweep):
            for seed in seeds:
                config = dataclasses.replace(base_config, variant=variant, seed=seed, **setting)
                logger.info("Grid run: variant=%s %s seed=%d", variant, setting or "", seed)
                result = train(dataset, encoders, database, config)
                report = evaluate(result.model, dataset, database, split=split, ks=ks)
                row: Dict[str, object] = {"variant": variant, "seed": seed, "best_epoch": result.best_epoch}
                if sweep is not None:
                    row["parameter"] = sweep[0]
                    row["value"] = next(iter(setting.values()))
                row.update(report.mean)
                rows.append(row)
                if callback is not None:
                    callback(row)
    return pd.DataFrame(rows)


def summarize(results: pd.DataFrame) -> pd.DataFrame:
    """Mean and standard deviation of every metric over seeds, per variant and setting."""
    keys = [column for column in ("variant", "parameter", "value") if column in results.columns]
    metrics = [column for column in results.columns if column.startswith(("HR@", "NDCG@"))]
    grouped = results.groupby(keys, sort=False)[metrics]
    summary = grouped.mean().add_suffix("_mean").join(grouped.std(ddof=0).add_suffix("_std"))
    return summary.reset_index()
