from __future__ import annotations

import dataclasses

import pandas as pd
import pytest

from horizonrec.exceptions import ConfigError
from horizonrec.helpers.ablation_utils import parse_sweep, run_grid, summarize
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.model_utils import TrainConfig
from horizonrec.helpers.retrieval_utils import RetrievalDatabase


def test_parse_sweep() -> None:
    assert parse_sweep("fusion_weight=0.1,0.5") == ("fusion_weight", [0.1, 0.5])
    assert parse_sweep(" top_k = 1,3,") == ("top_k", [1.0, 3.0])
    assert parse_sweep("top_k") == ("top_k", [5.0, 10.0, 15.0])
    assert len(parse_sweep("diffusion_weight")[1]) == 9
    for text in ("hidden_size=8", "steps", "steps=a,b", "steps="):
        with pytest.raises(ConfigError):
            parse_sweep(text)


def test_summarize_groups_over_seeds() -> None:
    results = pd.DataFrame(
        [
            {"variant": "full", "seed": 0, "HR@10": 0.4, "NDCG@10": 0.2},
            {"variant": "full", "seed": 1, "HR@10": 0.6, "NDCG@10": 0.4},
            {"variant": "base", "seed": 0, "HR@10": 0.1, "NDCG@10": 0.05},
        ]
    )
    summary = summarize(results).set_index("variant")
    assert summary.loc["full", "HR@10_mean"] == pytest.approx(0.5)
    assert summary.loc["full", "HR@10_std"] == pytest.approx(0.1)
    assert summary.loc["base", "NDCG@10_std"] == 0.0
    assert list(summary.index) == ["full", "base"]


def test_run_grid_rows(dataset: CrossDomainDataset, database: RetrievalDatabase, tiny_config: TrainConfig) -> None:
    config = dataclasses.replace(tiny_config, epochs=1)
    seen = []
    table = run_grid(
        dataset,
        None,
        database,
        config,
        variants=["full", "base"],
        seeds=[0],
        sweep=("steps", [2.0, 4.0]),
        ks=(10,),
        callback=seen.append,
    )
    assert len(table) == 4 and len(seen) == 4
    assert table["value"].tolist() == [2, 4, 2, 4]
    assert set(table.columns) >= {"variant", "seed", "parameter", "HR@10", "NDCG@10", "best_epoch"}


def test_run_grid_needs_variants(dataset: CrossDomainDataset, tiny_config: TrainConfig) -> None:
    with pytest.raises(ValueError):
        run_grid(dataset, None, None, tiny_config, variants=[], seeds=[0])
