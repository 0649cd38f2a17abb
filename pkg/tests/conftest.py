from __future__ import annotations

import pytest
import torch

from horizonrec.helpers.data_utils import CrossDomainDataset, build_dataset
from horizonrec.helpers.encoder_utils import EncoderConfig, SequenceEncoder
from horizonrec.helpers.model_utils import TrainConfig
from horizonrec.helpers.retrieval_utils import RetrievalDatabase, build_database
from horizonrec.helpers.synthetic_utils import SyntheticInteractions, generate_synthetic

WIDTH = 8
MAX_LEN = 50


@pytest.fixture(scope="session")
def synthetic() -> SyntheticInteractions:
    return generate_synthetic(n_users=16, n_items_per_domain=30, seq_len_range=(8, 12), latent_dim=4, seed=3)


@pytest.fixture(scope="session")
def dataset(synthetic: SyntheticInteractions) -> CrossDomainDataset:
    return build_dataset(synthetic.source_records, synthetic.target_records, max_len=MAX_LEN)


@pytest.fixture(scope="session")
def mixed_encoder(dataset: CrossDomainDataset) -> SequenceEncoder:
    torch.manual_seed(0)
    encoder = SequenceEncoder(EncoderConfig(dataset.vocab.num_joint, hidden_size=WIDTH, max_len=MAX_LEN), "mixed")
    return encoder.eval()


@pytest.fixture(scope="session")
def database(dataset: CrossDomainDataset, mixed_encoder: SequenceEncoder) -> RetrievalDatabase:
    sequences = list(zip(dataset.users, dataset.mixed_training_sequences()))
    return build_database(sequences, mixed_encoder.table(), dataset.vocab)


@pytest.fixture
def tiny_config() -> TrainConfig:
    return TrainConfig(
        hidden_size=WIDTH,
        max_len=MAX_LEN,
        batch_size=16,
        epochs=2,
        steps=4,
        dropout=0.0,
        top_k=3,
        patience=5,
        seed=0,
    )
