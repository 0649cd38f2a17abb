from __future__ import annotations

import dataclasses
import math

import pytest
import torch

from horizonrec.exceptions import CheckpointError, ConfigError, RetrievalError, VocabularyError
from horizonrec.helpers.data_utils import CrossDomainDataset, Domain
from horizonrec.helpers.encoder_utils import ItemEmbeddingTable
from horizonrec.helpers.model_utils import (
    FULL_WIRING,
    AblationVariant,
    HorizonRec,
    ModelWiring,
    TrainConfig,
    apply_ablation,
    collate,
    fuse_final,
    rec_loss,
)
from horizonrec.helpers.retrieval_utils import RetrievalDatabase

from .conftest import MAX_LEN


def _batch(dataset: CrossDomainDataset, n: int = 6):
    return collate(dataset.examples("train")[:n], MAX_LEN)


def _model(dataset: CrossDomainDataset, config: TrainConfig, **changes) -> HorizonRec:
    torch.manual_seed(0)
    return HorizonRec(dataclasses.replace(config, **changes), dataset.vocab)


def test_fuse_final_known_values() -> None:
    ones = torch.ones(2)
    fused = fuse_final(torch.tensor([1.0, 0.0]), torch.tensor([0.0, 1.0]), torch.tensor([2.0, 2.0]), 0.5)
    assert fused.tolist() == [1.5, 1.5]
    h_source, h_target, h_base = torch.randn(3), torch.randn(3), torch.randn(3)
    assert torch.allclose(fuse_final(h_source, h_target, h_base, 0.0), h_source + h_target)
    assert torch.equal(fuse_final(h_source, h_target, h_base, 1.0), h_base)
    with pytest.raises(ValueError):
        fuse_final(ones, ones, ones, 1.5)


def test_rec_loss_known_values() -> None:
    table = ItemEmbeddingTable("target", torch.cat([torch.zeros(1, 2), torch.eye(2)]))
    assert float(rec_loss(torch.zeros(1, 2), torch.tensor([1]), table)) == pytest.approx(math.log(2))
    wide = ItemEmbeddingTable("target", table.weight.double())
    confident = rec_loss(torch.tensor([[20.0, 0.0]], dtype=torch.float64), torch.tensor([1]), wide)
    assert float(confident) == pytest.approx(2.06e-9, rel=1e-2)
    h = torch.tensor([[0.3, -1.2]])
    single = rec_loss(h, torch.tensor([2]), table)
    batched = rec_loss(h.repeat(5, 1), torch.tensor([2] * 5), table)
    assert float(batched) == pytest.approx(float(single))
    with pytest.raises(VocabularyError):
        rec_loss(h, torch.tensor([3]), table)


@pytest.mark.parametrize(
    "variant, expected",
    [
        ("full", FULL_WIRING),
        ("DPD_S", ModelWiring(diffuse_target=False)),
        ("DPD_T", ModelWiring(diffuse_source=False)),
        ("no_DPD", ModelWiring(diffuse_source=False, include_source=False, mixed_condition=False)),
        ("no_MDR", ModelWiring(use_retrieval=False)),
        ("no_DMs", ModelWiring(diffuse_source=False, diffuse_target=False)),
    ],
)
def test_apply_ablation_table(variant: str, expected: ModelWiring) -> None:
    assert apply_ablation(variant) == expected


def test_base_variants_share_wiring() -> None:
    base = apply_ablation(AblationVariant.BASE)
    assert base == apply_ablation("no_DPD_MDR")
    assert base.base_only and not base.diffusion_enabled and not base.use_retrieval
    assert not apply_ablation("no_DMs").diffusion_enabled
    with pytest.raises(ValueError):
        apply_ablation("no_everything")


def test_train_config_from_mapping_coerces_strings() -> None:
    config = TrainConfig.from_mapping({"steps": "16", "fusion_weight": "0.3", "freeze_encoders": "yes"})
    assert (config.steps, config.fusion_weight, config.freeze_encoders) == (16, 0.3, True)
    layered = TrainConfig.from_mapping({"top_k": 2}, base=config)
    assert (layered.steps, layered.top_k) == (16, 2)


def test_train_config_rejects_bad_values() -> None:
    with pytest.raises(ConfigError):
        TrainConfig.from_mapping({"stepz": "4"})
    with pytest.raises(ConfigError):
        TrainConfig.from_mapping({"steps": "four"})
    with pytest.raises(ConfigError):
        TrainConfig(fusion_weight=1.2)
    with pytest.raises(ConfigError):
        TrainConfig(top_k=-1)
    with pytest.raises(ConfigError):
        TrainConfig(steps=0)
    with pytest.raises(ConfigError):
        TrainConfig(variant="bogus")


def test_forward_produces_full_bundle(
    dataset: CrossDomainDataset, database: RetrievalDatabase, tiny_config: TrainConfig
) -> None:
    model = _model(dataset, tiny_config)
    batch = _batch(dataset)
    output = model(batch, database, torch.Generator().manual_seed(0))
    bundle = output.bundle
    assert bundle.h_final.shape == (len(batch), tiny_config.hidden_size)
    assert set(bundle.reconstructed) == {Domain.SOURCE, Domain.TARGET}
    assert len(output.diffusion_pairs) == 2
    assert model.scores(bundle.h_final).shape == (len(batch), dataset.vocab.num_target)


def test_losses_combine_with_diffusion_weight(
    dataset: CrossDomainDataset, database: RetrievalDatabase, tiny_config: TrainConfig
) -> None:
    model = _model(dataset, tiny_config, diffusion_weight=0.7)
    total, rec, diff = model.losses(_batch(dataset), database, torch.Generator().manual_seed(1))
    assert float(total) == pytest.approx(float(rec) + 0.7 * float(diff), rel=1e-6)
    assert float(diff) > 0.0


def test_no_diffusion_variant_has_zero_diffusion_loss(
    dataset: CrossDomainDataset, database: RetrievalDatabase, tiny_config: TrainConfig
) -> None:
    model = _model(dataset, tiny_config, variant="no_DMs")
    _, _, diff = model.losses(_batch(dataset), database, torch.Generator().manual_seed(1))
    assert float(diff) == 0.0


def test_base_variant_scores_from_base_fusion(dataset: CrossDomainDataset, tiny_config: TrainConfig) -> None:
    model = _model(dataset, tiny_config, variant="base")
    output = model(_batch(dataset))
    assert torch.equal(output.bundle.h_final, output.bundle.h_base)
    assert output.diffusion_pairs == []


def test_no_dual_path_drops_source_reconstruction(
    dataset: CrossDomainDataset, database: RetrievalDatabase, tiny_config: TrainConfig
) -> None:
    model = _model(dataset, tiny_config, variant="no_DPD")
    output = model(_batch(dataset), database, torch.Generator().manual_seed(2))
    assert torch.equal(output.bundle.h_intermediate, output.bundle.reconstructed[Domain.TARGET])
    assert len(output.diffusion_pairs) == 1


def test_gaussian_noise_without_retrieval(dataset: CrossDomainDataset, tiny_config: TrainConfig) -> None:
    for changes in ({"variant": "no_MDR"}, {"top_k": 0}):
        model = _model(dataset, tiny_config, **changes)
        assert not model.wiring.use_retrieval
        noise = model._noise(torch.zeros(4000, 8), None, torch.Generator().manual_seed(3))
        assert abs(float(noise.mean())) < 0.05
        assert abs(float(noise.std()) - 1.0) < 0.05


def test_retrieval_variant_needs_database(dataset: CrossDomainDataset, tiny_config: TrainConfig) -> None:
    model = _model(dataset, tiny_config)
    with pytest.raises(RetrievalError):
        model(_batch(dataset))


def test_untrained_full_chain_scales_noised_state(
    dataset: CrossDomainDataset, database: RetrievalDatabase, tiny_config: TrainConfig
) -> None:
    model = _model(dataset, tiny_config).eval()
    with torch.no_grad():
        output = model(_batch(dataset), database, torch.Generator().manual_seed(4), full_chain=True)
    # An identity denoiser leaves only the posterior-mean weights of each step.
    scale = 1.0
    for t in range(2, model.schedule.steps + 1):
        scale *= sum(model.schedule.posterior_weights(t))
    for domain in (Domain.SOURCE, Domain.TARGET):
        expected = scale * output.bundle.noised[domain]
        assert torch.allclose(output.bundle.reconstructed[domain], expected, atol=1e-5)


def test_freeze_and_load_pretrained(dataset: CrossDomainDataset, tiny_config: TrainConfig) -> None:
    model = _model(dataset, tiny_config, freeze_encoders=True)
    assert not any(p.requires_grad for p in model.source_encoder.parameters())
    assert all(p.requires_grad for p in model.denoiser.parameters())

    other = _model(dataset, tiny_config, seed=1)
    with torch.no_grad():
        other.target_encoder.item_emb.weight.add_(1.0)
    model.load_pretrained({"target": other.target_encoder})
    assert torch.equal(model.target_table().weight, other.target_table().weight)
    with pytest.raises(CheckpointError):
        model.load_pretrained({"bogus": other.target_encoder})
    with pytest.raises(CheckpointError):
        model.load_pretrained({"mixed": other.target_encoder})
