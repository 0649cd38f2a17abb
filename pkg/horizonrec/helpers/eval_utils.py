"""Full-catalogue leave-one-out ranking, HR/NDCG, metric reports and alignment export."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from horizonrec.config import DEFAULT_METRIC_CUTOFFS, EVAL_SEED
from horizonrec.exceptions import VocabularyError
from horizonrec.helpers.data_utils import CrossDomainDataset, Domain, SequenceExample
from horizonrec.helpers.encoder_utils import ItemEmbeddingTable, UserStateBundle, score_items
from horizonrec.helpers.model_utils import HorizonRec, collate
from horizonrec.helpers.retrieval_utils import RetrievalDatabase, RowGenerators

logger = logging.getLogger(__name__)

EVAL_BATCH_SIZE = 512


@dataclass(frozen=True)
class RankingResult:
    user_id: str
    rank: int
    top_items: Tuple[int, ...] = ()


# ---------------------------------------------------------------------------
# Ranking and metrics
# ---------------------------------------------------------------------------

def rank_scores(scores: torch.Tensor, held_out: int, user_id: str = "", top_k: int = 20) -> RankingResult:
    """Rank 1-based item ``held_out`` within one score vector.

    ``rank = 1 + #(strictly higher) + #(equal score and lower index)``.
    """
    if not 1 <= held_out <= scores.shape[-1]:
        raise VocabularyError(held_out, "target vocabulary")
    target = scores[held_out - 1]
    higher = int((scores > target).sum())
    tied_before = int((scores[: held_out - 1] == target).sum())
    top = torch.sort(scores, descending=True, stable=True).indices[:top_k] + 1
    return RankingResult(user_id, 1 + higher + tied_before, tuple(top.tolist()))


def rank_target(
    h_final: torch.Tensor,
    table: ItemEmbeddingTable,
    held_out: int,
    user_id: str = "",
    top_k: int = 20,
) -> RankingResult:
    """Rank the held-out target item for one final user representation."""
    return rank_scores(score_items(h_final, table), held_out, user_id, top_k)


def _check_results(results: Sequence[RankingResult], k: int) -> None:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not results:
        raise ValueError("cannot compute a metric over zero ranking results")


def hr_at_k(results: Sequence[RankingResult], k: int) -> float:
    _check_results(results, k)
    return sum(result.rank <= k for result in results) / len(results)


def ndcg_at_k(results: Sequence[RankingResult], k: int) -> float:
    """Single-relevant-item NDCG: ``1 / log2(rank + 1)`` inside the cutoff, else 0."""
    _check_results(results, k)
    return sum(1.0 / math.log2(result.rank + 1) for result in results if result.rank <= k) / len(results)


def metric_values(results: Sequence[RankingResult], ks: Sequence[int]) -> Dict[str, float]:
    values: Dict[str, float] = {}
    for k in ks:
        values[f"HR@{k}"] = hr_at_k(results, k)
        values[f"NDCG@{k}"] = ndcg_at_k(results, k)
    return values


# ---------------------------------------------------------------------------
# Model inference
# ---------------------------------------------------------------------------

def example_seed(seed: int, example: SequenceExample) -> int:
    """Noise seed of one example, fixed by ``seed``, its user and its history length."""
    key = f"{seed}:{example.user_id}:{len(example.source)}:{len(example.target)}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little") >> 1


@torch.no_grad()
def rank_examples(
    model: HorizonRec,
    examples: Sequence[SequenceExample],
    database: Optional[RetrievalDatabase],
    seed: int = EVAL_SEED,
    top_k: int = 20,
    mask_seen: bool = False,
    batch_size: int = EVAL_BATCH_SIZE,
) -> List[RankingResult]:
    """Run the full inference path and rank each example's label.

    With ``mask_seen`` the items of the target history (other than the label
    itself) are removed from the candidates.  Each example draws its noise
    from :func:`example_seed`, so results do not depend on example order or
    batch size.
    """
    was_training = model.training
    model.eval()
    results: List[RankingResult] = []
    for start in range(0, len(examples), batch_size):
        chunk = examples[start:start + batch_size]
        batch = collate(chunk, model.config.max_len)
        generators = RowGenerators([example_seed(seed, example) for example in chunk])
        output = model(batch, database, generators, full_chain=True)
        scores = model.scores(output.bundle.h_final)
        for row, example in enumerate(chunk):
            row_scores = scores[row]
            if mask_seen:
                seen = [item for item in set(example.target) if item != example.label]
                if seen:
                    row_scores = row_scores.clone()
                    row_scores[torch.tensor(seen) - 1] = float("-inf")
            results.append(rank_scores(row_scores, example.label, example.user_id, top_k))
    model.train(was_training)
    return results


def evaluate_examples(
    model: HorizonRec,
    examples: Sequence[SequenceExample],
    database: Optional[RetrievalDatabase],
    ks: Sequence[int] = DEFAULT_METRIC_CUTOFFS,
    seed: int = EVAL_SEED,
    mask_seen: bool = False,
    batch_size: int = EVAL_BATCH_SIZE,
) -> Dict[str, float]:
    """HR@k and NDCG@k over ``examples`` with inference noise drawn from ``seed``."""
    results = rank_examples(model, examples, database, seed, max(ks), mask_seen, batch_size)
    return metric_values(results, ks)


@dataclass
class MetricReport:
    split: str
    ks: Tuple[int, ...]
    seeds: List[int] = field(default_factory=list)
    per_seed: List[Dict[str, float]] = field(default_factory=list)
    num_users: int = 0

    def frame(self) -> pd.DataFrame:
        """One row per noise seed plus ``mean`` and ``std`` rows."""
        table = pd.DataFrame(self.per_seed, index=[str(seed) for seed in self.seeds])
        table.index.name = "seed"
        summary = pd.DataFrame([table.mean(), table.std(ddof=0)], index=["mean", "std"])
        return pd.concat([table, summary])

    @property
    def mean(self) -> Dict[str, float]:
        return {key: float(np.mean([run[key] for run in self.per_seed])) for key in self.per_seed[0]}

    @property
    def std(self) -> Dict[str, float]:
        return {key: float(np.std([run[key] for run in self.per_seed])) for key in self.per_seed[0]}

    def to_text(self) -> str:
        return f"{self.split} metrics over {self.num_users} users\n{self.frame().to_string(float_format='%.4f')}"

    def key_values(self) -> Dict[str, str]:
        values = {"split": self.split, "users": str(self.num_users), "seeds": ",".join(map(str, self.seeds))}
        for key, value in self.mean.items():
            values[key] = repr(value)
        for key, value in self.std.items():
            values[f"{key}_std"] = repr(value)
        return values

    def write(self, directory: str | Path) -> Tuple[Path, Path]:
        """Write ``metrics.txt`` (key-value) and ``metrics.csv`` (per-seed table)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        kv_path = directory / "metrics.txt"
        kv_path.write_text("".join(f"{key}={value}\n" for key, value in self.key_values().items()), encoding="utf-8")
        csv_path = directory / "metrics.csv"
        self.frame().to_csv(csv_path)
        return kv_path, csv_path


def evaluate(
    model: HorizonRec,
    dataset: CrossDomainDataset,
    database: Optional[RetrievalDatabase],
    split: str = "test",
    ks: Sequence[int] = DEFAULT_METRIC_CUTOFFS,
    eval_seed: int = EVAL_SEED,
    noise_seeds: int = 1,
    mask_seen: bool = False,
) -> MetricReport:
    """Evaluate ``split`` with ``noise_seeds`` consecutive inference-noise seeds.

    Raises:
        ValueError: for a split other than validation/test, empty cutoffs, or
            a split without instances.
    """
    if split not in ("validation", "test"):
        raise ValueError(f"evaluation split must be validation or test, got {split!r}")
    if not ks:
        raise ValueError("at least one cutoff is required")
    if noise_seeds < 1:
        raise ValueError(f"noise_seeds must be >= 1, got {noise_seeds}")
    examples = dataset.examples(split)
    if not examples:
        raise ValueError(f"split {split!r} has no instances")
    ks = tuple(sorted(set(int(k) for k in ks)))
    report = MetricReport(split=split, ks=ks, num_users=len(examples))
    for offset in range(noise_seeds):
        seed = eval_seed + offset
        report.seeds.append(seed)
        report.per_seed.append(
            evaluate_examples(model, examples, database, ks, seed, mask_seen, model.config.batch_size)
        )
    logger.info("Evaluated %s split: %s", split, ", ".join(f"{k}={v:.4f}" for k, v in report.mean.items()))
    return report


# ---------------------------------------------------------------------------
# Alignment export
# ---------------------------------------------------------------------------

@dataclass
class AlignmentBatch:
    users: List[str]
    labels: torch.Tensor
    bundle: UserStateBundle
    table: ItemEmbeddingTable


@torch.no_grad()
def collect_alignment(
    model: HorizonRec,
    dataset: CrossDomainDataset,
    database: Optional[RetrievalDatabase],
    n_users: int = 100,
    split: str = "test",
    seed: int = EVAL_SEED,
) -> AlignmentBatch:
    """Run inference for up to ``n_users`` users drawn with ``seed``."""
    examples = dataset.examples(split)
    if not examples:
        raise ValueError(f"split {split!r} has no instances")
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(examples), size=min(n_users, len(examples)), replace=False))
    picked = [examples[i] for i in chosen]
    model.eval()
    batch = collate(picked, model.config.max_len)
    generators = RowGenerators([example_seed(seed, example) for example in picked])
    output = model(batch, database, generators, full_chain=True)
    return AlignmentBatch(batch.users, batch.labels, output.bundle, model.target_table())


def _cosine(a: torch.Tensor, b: torch.Tensor) -> np.ndarray:
    a, b = a.double(), b.double()
    return (F.cosine_similarity(a, b, dim=-1, eps=1e-12)).numpy()


def export_alignment(batch: AlignmentBatch, out_dir: str | Path) -> Tuple[Path, Path]:
    """Write ``similarity.csv`` and ``embeddings.csv`` for the collected users.

    ``similarity.csv`` has one row per user with the cosine between the final
    representation and each of the source, target and mixed representations,
    plus the source/target cosine before and after diffusion.
    ``embeddings.csv`` holds one row per (user, kind) with columns ``d0..``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = batch.bundle
    final = bundle.h_final.detach()
    source0 = bundle.reconstructed.get(Domain.SOURCE, bundle.h_source).detach()
    target0 = bundle.reconstructed.get(Domain.TARGET, bundle.h_target).detach()
    similarity = pd.DataFrame(
        {
            "user_id": batch.users,
            "cos_final_source": _cosine(final, bundle.h_source),
            "cos_final_target": _cosine(final, bundle.h_target),
            "cos_final_mixed": _cosine(final, bundle.h_mixed),
            "cos_source_target": _cosine(bundle.h_source, bundle.h_target),
            "cos_source_target_diffused": _cosine(source0, target0),
        }
    )
    similarity_path = out_dir / "similarity.csv"
    similarity.to_csv(similarity_path, index=False, float_format="%.12g")

    kinds = {
        "source": bundle.h_source,
        "target": bundle.h_target,
        "mixed": bundle.h_mixed,
        "final": final,
        "target_item": batch.table.weight.detach()[batch.labels],
    }
    frames = []
    for kind, matrix in kinds.items():
        frame = pd.DataFrame(
            matrix.detach().double().numpy(), columns=[f"d{i}" for i in range(matrix.shape[1])]
        )
        frame.insert(0, "kind", kind)
        frame.insert(0, "user_id", batch.users)
        frames.append(frame)
    embeddings_path = out_dir / "embeddings.csv"
    pd.concat(frames, ignore_index=True).to_csv(embeddings_path, index=False, float_format="%.12g")
    logger.info("Exported alignment data for %d users to %s", len(batch.users), out_dir)
    return similarity_path, embeddings_path


def mean_alignment_gain(similarity: pd.DataFrame) -> float:
    """Mean cosine after diffusion minus mean cosine before, over users."""
    return float(similarity["cos_source_target_diffused"].mean() - similarity["cos_source_target"].mean())
