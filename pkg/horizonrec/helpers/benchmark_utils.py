"""Timing of training epochs, inference and retrieval at two scales each."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import pandas as pd
import torch
import torch.nn.functional as F

from horizonrec.config import EVAL_SEED
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.encoder_utils import SequenceEncoder
from horizonrec.helpers.eval_utils import rank_examples
from horizonrec.helpers.model_utils import TrainConfig
from horizonrec.helpers.retrieval_utils import RetrievalDatabase, retrieve_topk
from horizonrec.helpers.training_utils import train

logger = logging.getLogger(__name__)


@dataclass
class BenchmarkConfig:
    step_values: Sequence[int] = (16, 32)
    database_scales: Sequence[int] = (1, 2)
    epochs: int = 2
    retrieval_queries: int = 256
    repeats: int = 3


@dataclass
class BenchmarkReport:
    timings: pd.DataFrame
    ratios: Dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [self.timings.to_string(index=False, float_format="%.4f")]
        lines += [f"{name}: {value:.3f}" for name, value in self.ratios.items()]
        return "\n".join(lines)

    def write(self, directory: str | Path) -> Tuple[Path, Path]:
        """Write ``metrics.txt`` (ratios as key-value lines) and ``timings.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        kv_path = directory / "metrics.txt"
        kv_path.write_text("".join(f"{name}={float(value)!r}\n" for name, value in self.ratios.items()), encoding="utf-8")
        csv_path = directory / "timings.csv"
        self.timings.to_csv(csv_path, index=False)
        return kv_path, csv_path


def scale_database(database: RetrievalDatabase, factor: int) -> RetrievalDatabase:
    """Repeat the rows of ``database`` ``factor`` times."""
    if factor < 1:
        raise ValueError(f"database scale must be >= 1, got {factor}")
    return dataclasses.replace(
        database,
        embeddings=database.embeddings.repeat(factor, 1),
        normalized=database.normalized.repeat(factor, 1),
        provenance=list(database.provenance) * factor,
    )


def _time_retrieval(database: RetrievalDatabase, queries: torch.Tensor, k: int, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        started = time.perf_counter()
        retrieve_topk(queries, database, k)
        best = min(best, time.perf_counter() - started)
    return best


def run_benchmark_suite(
    dataset: CrossDomainDataset,
    encoders: Optional[Mapping[str, SequenceEncoder]],
    database: RetrievalDatabase,
    base_config: TrainConfig,
    bench: BenchmarkConfig,
) -> BenchmarkReport:
    """Measure training and inference time per diffusion step count and
    retrieval time per database size, and the ratios between consecutive scales.

    Raises:
        ValueError: if the benchmark config names no step value or no
            database scale.
    """
    if not bench.step_values or not bench.database_scales:
        raise ValueError("benchmark config needs at least one step value and one database scale")
    if bench.epochs < 1 or bench.repeats < 1 or bench.retrieval_queries < 1:
        raise ValueError("benchmark epochs, repeats and query count must be positive")

    rows: List[Dict[str, object]] = []
    test_examples = dataset.examples("test")
    for steps in bench.step_values:
        config = dataclasses.replace(base_config, steps=int(steps), epochs=bench.epochs)
        started = time.perf_counter()
        result = train(dataset, encoders, database, config, validate=False)
        total = time.perf_counter() - started
        started = time.perf_counter()
        rank_examples(result.model, test_examples, database, EVAL_SEED)
        inference = time.perf_counter() - started
        epoch_time = sum(r.wall_time for r in result.reports) / len(result.reports)
        rows.append(
            {
                "measure": "steps",
                "value": int(steps),
                "epoch_time": epoch_time,
                "train_time": total,
                "inference_time": inference,
            }
        )
        logger.info("T=%d: %.3fs/epoch, inference %.3fs", steps, epoch_time, inference)

    generator = torch.Generator().manual_seed(EVAL_SEED)
    queries = F.normalize(torch.randn(bench.retrieval_queries, database.width, generator=generator), dim=-1)
    k = max(1, base_config.top_k)
    for scale in bench.database_scales:
        scaled = scale_database(database, int(scale))
        elapsed = _time_retrieval(scaled, queries, min(k, len(scaled)), bench.repeats)
        rows.append({"measure": "database_rows", "value": len(scaled), "retrieval_time": elapsed})
        logger.info("|D|=%d: retrieval %.4fs for %d queries", len(scaled), elapsed, bench.retrieval_queries)

    timings = pd.DataFrame(rows)
    ratios: Dict[str, float] = {}
    steps_rows = timings[timings["measure"] == "steps"].reset_index(drop=True)
    for i in range(1, len(steps_rows)):
        low, high = steps_rows.loc[i - 1], steps_rows.loc[i]
        ratios[f"epoch_time T{low['value']}->T{high['value']}"] = float(high["epoch_time"] / low["epoch_time"])
        ratios[f"inference_time T{low['value']}->T{high['value']}"] = float(high["inference_time"] / low["inference_time"])
    db_rows = timings[timings["measure"] == "database_rows"].reset_index(drop=True)
    for i in range(1, len(db_rows)):
        low, high = db_rows.loc[i - 1], db_rows.loc[i]
        ratios[f"retrieval_time |D|{low['value']}->|D|{high['value']}"] = float(high["retrieval_time"] / low["retrieval_time"])
    return BenchmarkReport(timings, ratios)
