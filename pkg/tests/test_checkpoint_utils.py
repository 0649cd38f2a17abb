from __future__ import annotations

import dataclasses

import pytest
import torch

from horizonrec.exceptions import CheckpointError
from horizonrec.helpers.checkpoint_utils import (
    load_encoder,
    load_encoder_dir,
    load_model,
    save_encoder,
    save_model,
)
from horizonrec.helpers.data_utils import CrossDomainDataset, JointVocabulary
from horizonrec.helpers.eval_utils import evaluate
from horizonrec.helpers.model_utils import HorizonRec, TrainConfig
from horizonrec.helpers.retrieval_utils import RetrievalDatabase


def test_encoder_round_trip(tmp_path, mixed_encoder) -> None:
    path = save_encoder(mixed_encoder, tmp_path / "encoder_mixed.pt", [2.0, 1.0])
    loaded = load_encoder(path)
    assert loaded.domain == "mixed"
    assert loaded.config == mixed_encoder.config
    for name, value in mixed_encoder.state_dict().items():
        assert torch.equal(loaded.state_dict()[name], value)
    assert set(load_encoder_dir(tmp_path)) == {"mixed"}


def test_missing_checkpoints_are_reported(tmp_path) -> None:
    with pytest.raises(FileNotFoundError, match="checkpoint not found"):
        load_model(tmp_path / "missing.pt")
    with pytest.raises(FileNotFoundError, match="checkpoint not found"):
        load_encoder_dir(tmp_path)


def test_wrong_checkpoint_kind(tmp_path, mixed_encoder) -> None:
    path = save_encoder(mixed_encoder, tmp_path / "encoder.pt")
    with pytest.raises(CheckpointError):
        load_model(path)
    garbage = tmp_path / "garbage.pt"
    garbage.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        load_encoder(garbage)


def test_model_round_trip_reproduces_metrics(
    tmp_path, dataset: CrossDomainDataset, database: RetrievalDatabase, tiny_config: TrainConfig
) -> None:
    torch.manual_seed(0)
    model = HorizonRec(tiny_config, dataset.vocab).eval()
    data_dir = dataset.save(tmp_path / "data")
    path = save_model(model, tmp_path / "model.pt", database, data_dir, dataset.content_hash(), [{"epoch": 1}])

    checkpoint = load_model(path)
    assert checkpoint.reports == [{"epoch": 1}]
    assert checkpoint.model.config == model.config
    assert torch.equal(checkpoint.database.embeddings, database.embeddings)
    before = evaluate(model, dataset, database, ks=(5, 10))
    after = evaluate(checkpoint.model, dataset, checkpoint.database, ks=(5, 10))
    assert before.per_seed == after.per_seed


def test_model_vocabulary_mismatch(tmp_path, dataset: CrossDomainDataset, tiny_config: TrainConfig) -> None:
    config = dataclasses.replace(tiny_config, variant="base")
    model = HorizonRec(config, dataset.vocab)
    path = save_model(model, tmp_path / "model.pt")
    smaller = dataclasses.replace(dataset, vocab=JointVocabulary(source={"a": 1}, target={"b": 1}))
    with pytest.raises(CheckpointError, match="vocabulary"):
        load_model(path, smaller)
    with pytest.raises(CheckpointError, match="no dataset directory"):
        load_model(path)
