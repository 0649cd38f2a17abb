from __future__ import annotations

import pytest
import torch
from torch.func import functional_call

from horizonrec.exceptions import VocabularyError
from horizonrec.helpers.encoder_utils import (
    BaseFusion,
    EncoderConfig,
    ItemEmbeddingTable,
    SequenceEncoder,
    encode_sequence,
    fuse_base,
    next_item_accuracy,
    pad_sequences,
    pretrain_domain,
    score_items,
)


def _encoder(num_items: int = 10, width: int = 8, max_len: int = 6, seed: int = 0) -> SequenceEncoder:
    torch.manual_seed(seed)
    return SequenceEncoder(EncoderConfig(num_items, hidden_size=width, max_len=max_len, dropout=0.0)).eval()


def test_pad_sequences_left_pads_and_truncates() -> None:
    batch = pad_sequences([[1, 2], [3, 4, 5, 6]], max_len=3)
    assert batch.tolist() == [[0, 1, 2], [4, 5, 6]]


def test_encode_sequence_shapes_and_readout() -> None:
    encoder = _encoder()
    hidden, h = encode_sequence([1, 2, 3], encoder)
    assert hidden.shape == (3, 8)
    assert torch.equal(h, hidden[-1])


def test_batched_encoding_matches_single_sequences() -> None:
    encoder = _encoder()
    with torch.no_grad():
        _, short = encode_sequence([1, 2, 3], encoder)
        batched = encoder.represent(pad_sequences([[1, 2, 3], [4, 5, 1, 2, 3]], 6))
    assert torch.allclose(batched[0], short, atol=1e-6)


def test_encoder_is_causal() -> None:
    encoder = _encoder()
    with torch.no_grad():
        first, _ = encode_sequence([1, 2, 3, 4], encoder)
        second, _ = encode_sequence([1, 2, 3, 9], encoder)
    assert torch.allclose(first[:3], second[:3], atol=1e-6)
    assert not torch.allclose(first[3], second[3])


def test_attention_rows_sum_to_one() -> None:
    encoder = _encoder()
    with torch.no_grad():
        _, _, attention = encode_sequence([1, 2, 3, 4], encoder, return_attention=True)
    assert torch.allclose(attention[0].sum(dim=-1), torch.ones(4), atol=1e-6)


def test_identical_items_share_attention_equally() -> None:
    encoder = _encoder()
    with torch.no_grad():
        encoder.pos_emb.weight.zero_()
        _, _, attention = encode_sequence([2, 2], encoder, return_attention=True)
    assert torch.allclose(attention[0][1], torch.tensor([0.5, 0.5]), atol=1e-6)


def test_encode_sequence_rejects_bad_input() -> None:
    encoder = _encoder(max_len=3)
    with pytest.raises(ValueError):
        encode_sequence([], encoder)
    with pytest.raises(ValueError):
        encode_sequence([1, 2, 3, 4], encoder)
    with pytest.raises(VocabularyError):
        encode_sequence([1, 11], encoder)


def test_fuse_base_degenerate_weights() -> None:
    fusion = BaseFusion(4, activation=False)
    with torch.no_grad():
        fusion.linear.weight.zero_()
        fusion.linear.bias.copy_(torch.arange(4.0))
    assert torch.equal(fuse_base(torch.randn(2, 4), torch.randn(2, 4), fusion), torch.arange(4.0).expand(2, 4))
    with torch.no_grad():
        fusion.linear.weight.copy_(torch.cat([torch.eye(4), torch.zeros(4, 4)], dim=1))
        fusion.linear.bias.zero_()
    h_source = torch.randn(3, 4)
    assert torch.allclose(fuse_base(h_source, torch.randn(3, 4), fusion), h_source)
    with pytest.raises(ValueError):
        fuse_base(torch.randn(3, 5), torch.randn(3, 4), fusion)


def test_score_items_matches_dot_products() -> None:
    torch.manual_seed(1)
    table = ItemEmbeddingTable("target", torch.randn(1001, 16, dtype=torch.float64))
    h = torch.randn(16, dtype=torch.float64)
    scores = score_items(h, table)
    expected = torch.tensor([float(h @ table.weight[j]) for j in range(1, 1001)], dtype=torch.float64)
    assert torch.allclose(scores, expected, atol=1e-9)
    assert torch.count_nonzero(score_items(torch.zeros(16, dtype=torch.float64), table)) == 0


def test_score_items_self_match() -> None:
    weight = torch.cat([torch.zeros(1, 4), torch.eye(4)])
    table = ItemEmbeddingTable("target", weight)
    assert int(score_items(weight[3], table).argmax()) + 1 == 3


def test_pretrain_domain_reduces_loss_and_is_deterministic() -> None:
    sequences = [[1, 2, 3, 4, 5], [2, 3, 4, 5, 1], [3, 4, 5, 1, 2]]
    config = EncoderConfig(5, hidden_size=8, max_len=6, dropout=0.0)
    first = pretrain_domain(sequences, config, "target", epochs=40, lr=1e-2, seed=3)
    second = pretrain_domain(sequences, config, "target", epochs=40, lr=1e-2, seed=3)
    assert first.losses == second.losses
    assert first.losses[-1] < first.losses[0]


def test_pretrain_domain_learns_deterministic_cycles() -> None:
    cycle = list(range(1, 11))
    sequences = [(cycle[offset:] + cycle[:offset]) * 2 for offset in (0, 3, 5, 8)]
    config = EncoderConfig(10, hidden_size=16, max_len=24, dropout=0.0)
    result = pretrain_domain(sequences, config, "mixed", epochs=300, lr=1e-2, seed=0)
    assert next_item_accuracy(result.encoder, sequences) == 1.0


def test_pretrain_with_zero_lr_keeps_parameters() -> None:
    sequences = [[1, 2, 3], [3, 2, 1]]
    config = EncoderConfig(3, hidden_size=4, max_len=4, dropout=0.0)
    torch.manual_seed(7)
    initial = SequenceEncoder(config, "source").state_dict()
    result = pretrain_domain(sequences, config, "source", epochs=3, lr=0.0, seed=7)
    for name, value in result.encoder.state_dict().items():
        assert torch.equal(value, initial[name])


def test_pretrain_needs_two_items() -> None:
    with pytest.raises(ValueError):
        pretrain_domain([[1], [2]], EncoderConfig(2, hidden_size=4, max_len=4), "source", epochs=1)


def test_encoder_gradients_match_finite_differences() -> None:
    encoder = _encoder(num_items=6, width=8, max_len=4).double()
    ids = torch.tensor([[0, 1, 2, 3], [4, 5, 6, 1]])
    params = {name: p.detach() for name, p in encoder.named_parameters()}
    for name in ("blocks.0.attention.query.weight", "blocks.0.ffn.0.weight", "item_emb.weight"):

        def readout(weight: torch.Tensor, name: str = name) -> torch.Tensor:
            hidden, _ = functional_call(encoder, {**params, name: weight}, (ids,))
            return hidden[:, -1]

        weight = params[name].clone().requires_grad_(True)
        assert torch.autograd.gradcheck(readout, (weight,), eps=1e-6, atol=1e-5, rtol=1e-4)
