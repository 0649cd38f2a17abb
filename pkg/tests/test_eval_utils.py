from __future__ import annotations

import math

import pandas as pd
import pytest
import torch

from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.encoder_utils import ItemEmbeddingTable
from horizonrec.helpers.eval_utils import (
    MetricReport,
    RankingResult,
    collect_alignment,
    evaluate,
    evaluate_examples,
    example_seed,
    export_alignment,
    hr_at_k,
    mean_alignment_gain,
    metric_values,
    ndcg_at_k,
    rank_examples,
    rank_scores,
    rank_target,
)
from horizonrec.helpers.model_utils import HorizonRec, TrainConfig, collate
from horizonrec.helpers.retrieval_utils import RetrievalDatabase, RowGenerators


@pytest.fixture
def model(dataset: CrossDomainDataset, tiny_config: TrainConfig) -> HorizonRec:
    torch.manual_seed(0)
    return HorizonRec(tiny_config, dataset.vocab).eval()


def _results(*ranks: int) -> list[RankingResult]:
    return [RankingResult(f"u{i}", rank) for i, rank in enumerate(ranks)]


def test_rank_matches_sorted_position() -> None:
    generator = torch.Generator().manual_seed(0)
    scores = torch.randn(1000, generator=generator, dtype=torch.float64)
    order = sorted(range(1000), key=lambda i: (-float(scores[i]), i))
    for held_out in (1, 17, 500, 1000):
        assert rank_scores(scores, held_out).rank == order.index(held_out - 1) + 1


def test_rank_breaks_ties_by_item_index() -> None:
    scores = torch.zeros(10)
    assert rank_scores(scores, 5).rank == 5
    scores = torch.tensor([1.0, 3.0, 3.0, 0.0])
    assert rank_scores(scores, 3).rank == 2
    assert rank_scores(scores, 2).rank == 1
    assert rank_scores(scores, 2, top_k=3).top_items == (2, 3, 1)


def test_rank_target_uses_dot_product_scores() -> None:
    table = ItemEmbeddingTable("target", torch.cat([torch.zeros(1, 3), torch.eye(3)]))
    result = rank_target(torch.tensor([0.1, 0.9, 0.5]), table, 3, user_id="u")
    assert (result.user_id, result.rank) == ("u", 2)


def test_metric_values_known_ranks() -> None:
    assert ndcg_at_k(_results(3), 10) == pytest.approx(0.5)
    assert ndcg_at_k(_results(1), 1) == 1.0
    assert hr_at_k(_results(11), 10) == 0.0
    assert ndcg_at_k(_results(11), 10) == 0.0
    values = metric_values(_results(1, 3, 11, 30), (5, 10, 20))
    assert values["HR@10"] == 0.5
    assert values["NDCG@20"] == pytest.approx((1.0 + 0.5 + 1 / math.log2(12)) / 4)


def test_metrics_grow_with_cutoff() -> None:
    results = _results(1, 2, 4, 7, 9, 15, 22, 40, 100)
    for k in range(1, 60):
        assert hr_at_k(results, k) <= hr_at_k(results, k + 1)
        assert ndcg_at_k(results, k) <= ndcg_at_k(results, k + 1)
        assert ndcg_at_k(results, k) <= hr_at_k(results, k)


def test_metrics_reject_empty_input() -> None:
    with pytest.raises(ValueError):
        hr_at_k([], 10)
    with pytest.raises(ValueError):
        ndcg_at_k(_results(1), 0)


def test_evaluate_is_deterministic(
    model: HorizonRec, dataset: CrossDomainDataset, database: RetrievalDatabase
) -> None:
    first = evaluate(model, dataset, database, ks=(5, 10), noise_seeds=2)
    second = evaluate(model, dataset, database, ks=(10, 5), noise_seeds=2)
    assert first.per_seed == second.per_seed
    assert first.seeds == [2024, 2025]
    assert first.num_users == len(dataset.examples("test"))
    frame = first.frame()
    assert list(frame.index) == ["2024", "2025", "mean", "std"]
    assert frame.loc["mean", "HR@10"] == pytest.approx(first.mean["HR@10"])


def test_evaluate_rejects_bad_split(model: HorizonRec, dataset: CrossDomainDataset) -> None:
    with pytest.raises(ValueError):
        evaluate(model, dataset, None, split="train")
    with pytest.raises(ValueError):
        evaluate(model, dataset, None, ks=())


def test_masking_seen_items_never_hurts_rank(
    model: HorizonRec, dataset: CrossDomainDataset, database: RetrievalDatabase
) -> None:
    examples = dataset.examples("test")
    plain = rank_examples(model, examples, database, 1)
    masked = rank_examples(model, examples, database, 1, mask_seen=True)
    assert all(m.rank <= p.rank for m, p in zip(masked, plain))


def test_example_seed_depends_on_seed_and_example(dataset: CrossDomainDataset) -> None:
    first, second = dataset.examples("test")[:2]
    assert example_seed(3, first) == example_seed(3, first)
    assert example_seed(3, first) != example_seed(4, first)
    assert example_seed(3, first) != example_seed(3, second)
    assert 0 <= example_seed(3, first) < 2 ** 63


def test_inference_noise_ignores_example_order_and_batching(
    model: HorizonRec, dataset: CrossDomainDataset, database: RetrievalDatabase
) -> None:
    examples = dataset.examples("test")
    max_len = model.config.max_len

    def final(chunk):
        generators = RowGenerators([example_seed(7, example) for example in chunk])
        with torch.no_grad():
            return model(collate(chunk, max_len), database, generators, full_chain=True).bundle.h_final

    together = final(examples)
    assert torch.allclose(final(examples[::-1]), together.flip(0), atol=1e-5)
    halves = torch.cat([final(examples[:5]), final(examples[5:])])
    assert torch.allclose(halves, together, atol=1e-5)


def test_evaluate_examples_ignores_batch_size(
    model: HorizonRec, dataset: CrossDomainDataset, database: RetrievalDatabase
) -> None:
    examples = dataset.examples("test")
    whole = evaluate_examples(model, examples, database, (5, 10), seed=7)
    batched = evaluate_examples(model, examples[::-1], database, (5, 10), seed=7, batch_size=3)
    assert batched == pytest.approx(whole)


def test_row_generators_are_rejected_for_training_steps(
    model: HorizonRec, dataset: CrossDomainDataset, database: RetrievalDatabase
) -> None:
    examples = dataset.examples("train")[:2]
    with pytest.raises(ValueError):
        model(collate(examples, model.config.max_len), database, RowGenerators([1, 2]))


def test_metric_report_write(tmp_path) -> None:
    report = MetricReport(
        split="test",
        ks=(10,),
        seeds=[1, 2],
        per_seed=[{"HR@10": 0.5, "NDCG@10": 0.25}, {"HR@10": 0.7, "NDCG@10": 0.35}],
        num_users=20,
    )
    kv_path, csv_path = report.write(tmp_path)
    lines = dict(line.split("=", 1) for line in kv_path.read_text(encoding="utf-8").splitlines())
    assert float(lines["HR@10"]) == pytest.approx(0.6)
    assert float(lines["HR@10_std"]) == pytest.approx(0.1)
    assert lines["seeds"] == "1,2"
    table = pd.read_csv(csv_path, index_col=0)
    assert list(table.index.astype(str)) == ["1", "2", "mean", "std"]
    assert "test metrics over 20 users" in report.to_text()


def test_export_alignment_files(
    tmp_path, model: HorizonRec, dataset: CrossDomainDataset, database: RetrievalDatabase
) -> None:
    batch = collect_alignment(model, dataset, database, n_users=5)
    similarity_path, embeddings_path = export_alignment(batch, tmp_path)

    similarity = pd.read_csv(similarity_path)
    assert len(similarity) == 5
    assert similarity["cos_final_source"].between(-1.0, 1.0).all()
    source, target = batch.bundle.h_source.double(), batch.bundle.h_target.double()
    expected = [
        float(source[i] @ target[i]) / (float(source[i].norm()) * float(target[i].norm())) for i in range(5)
    ]
    assert similarity["cos_source_target"].tolist() == pytest.approx(expected, abs=1e-9)

    embeddings = pd.read_csv(embeddings_path)
    assert len(embeddings) == 5 * 5
    assert set(embeddings["kind"]) == {"source", "target", "mixed", "final", "target_item"}
    assert [c for c in embeddings.columns if c.startswith("d")] == [f"d{i}" for i in range(8)]
    assert math.isfinite(mean_alignment_gain(similarity))
