"""Self-attentive sequence encoders, base cross-domain fusion and pretraining.

One encoder exists per domain (source, target) plus one over the joint
vocabulary for mixed sequences.  Sequences are left-padded with index 0; the
sequence representation is the hidden state at the last position.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn
from tqdm import tqdm

from horizonrec.config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_DROPOUT,
    DEFAULT_HIDDEN_SIZE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_LEN,
    DEFAULT_NUM_LAYERS,
)
from horizonrec.exceptions import TrainingDivergedError, VocabularyError

logger = logging.getLogger(__name__)


@dataclass
class EncoderConfig:
    num_items: int
    hidden_size: int = DEFAULT_HIDDEN_SIZE
    max_len: int = DEFAULT_MAX_LEN
    num_layers: int = DEFAULT_NUM_LAYERS
    dropout: float = DEFAULT_DROPOUT
    causal: bool = True

    def __post_init__(self) -> None:
        if self.num_items < 1:
            raise ValueError(f"num_items must be positive, got {self.num_items}")
        if self.num_layers < 1:
            raise ValueError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.hidden_size < 1 or self.max_len < 1:
            raise ValueError("hidden_size and max_len must be positive")


@dataclass
class ItemEmbeddingTable:
    """Item embedding matrix of one domain; row 0 is the padding row."""

    domain: str
    weight: torch.Tensor

    @property
    def num_items(self) -> int:
        return self.weight.shape[0] - 1

    @property
    def width(self) -> int:
        return self.weight.shape[1]

    @property
    def items(self) -> torch.Tensor:
        return self.weight[1:]

    def lookup(self, index: int) -> torch.Tensor:
        if not 1 <= index <= self.num_items:
            raise VocabularyError(index, f"{self.domain} embedding table")
        return self.weight[index]


@dataclass
class UserStateBundle:
    """Per-user representations flowing through one forward pass (batched)."""

    h_source: torch.Tensor
    h_target: torch.Tensor
    h_mixed: torch.Tensor
    h_base: torch.Tensor
    noised: dict = field(default_factory=dict)
    reconstructed: dict = field(default_factory=dict)
    h_intermediate: Optional[torch.Tensor] = None
    h_final: Optional[torch.Tensor] = None


# ---------------------------------------------------------------------------
# Modules
# ---------------------------------------------------------------------------

class CausalSelfAttention(nn.Module):
    """Single-head scaled dot-product self-attention with causal and padding masks."""

    def __init__(self, hidden_size: int, dropout: float = 0.0, causal: bool = True) -> None:
        super().__init__()
        self.hidden_size = hidden_size
        self.causal = causal
        self.query = nn.Linear(hidden_size, hidden_size)
        self.key = nn.Linear(hidden_size, hidden_size)
        self.value = nn.Linear(hidden_size, hidden_size)
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        length = x.shape[1]
        q, k, v = self.query(x), self.key(x), self.value(x)
        scores = q @ k.transpose(-1, -2) / math.sqrt(self.hidden_size)
        allowed = mask[:, None, :].expand(-1, length, -1)
        if self.causal:
            allowed = allowed & torch.ones(length, length, dtype=torch.bool, device=x.device).tril()
        # Padding queries see only themselves so that no row is fully masked.
        allowed = allowed | torch.eye(length, dtype=torch.bool, device=x.device)
        weights = torch.softmax(scores.masked_fill(~allowed, float("-inf")), dim=-1)
        return self.dropout(weights) @ v, weights


class SelfAttentionBlock(nn.Module):
    """Pre-norm attention and point-wise feed-forward, each with a residual."""

    def __init__(self, hidden_size: int, dropout: float, causal: bool) -> None:
        super().__init__()
        self.attn_norm = nn.LayerNorm(hidden_size)
        self.attention = CausalSelfAttention(hidden_size, dropout, causal)
        self.ffn_norm = nn.LayerNorm(hidden_size)
        self.ffn = nn.Sequential(
            nn.Linear(hidden_size, hidden_size),
            nn.ReLU(),
            nn.Dropout(dropout),
            nn.Linear(hidden_size, hidden_size),
        )
        self.dropout = nn.Dropout(dropout)

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        attended, weights = self.attention(self.attn_norm(x), mask)
        x = x + self.dropout(attended)
        x = x + self.dropout(self.ffn(self.ffn_norm(x)))
        return x * mask.unsqueeze(-1), weights


class SequenceEncoder(nn.Module):
    """SASRec-style encoder over one vocabulary."""

    def __init__(self, config: EncoderConfig, domain: str = "target") -> None:
        super().__init__()
        self.config = config
        self.domain = domain
        d = config.hidden_size
        self.item_emb = nn.Embedding(config.num_items + 1, d, padding_idx=0)
        # Position 0 is the padding position; real items count from 1.
        self.pos_emb = nn.Embedding(config.max_len + 1, d, padding_idx=0)
        self.dropout = nn.Dropout(config.dropout)
        self.blocks = nn.ModuleList(
            SelfAttentionBlock(d, config.dropout, config.causal) for _ in range(config.num_layers)
        )
        self.final_norm = nn.LayerNorm(d)
        nn.init.normal_(self.item_emb.weight, std=d ** -0.5)
        nn.init.normal_(self.pos_emb.weight, std=d ** -0.5)
        with torch.no_grad():
            self.item_emb.weight[0].zero_()
            self.pos_emb.weight[0].zero_()

    @property
    def hidden_size(self) -> int:
        return self.config.hidden_size

    def table(self) -> ItemEmbeddingTable:
        return ItemEmbeddingTable(self.domain, self.item_emb.weight)

    def forward(self, item_ids: torch.Tensor) -> Tuple[torch.Tensor, List[torch.Tensor]]:
        """Encode a left-padded ``(batch, length)`` index tensor.

        Returns:
            The hidden sequence ``(batch, length, d)`` (zero at padding) and
            the attention weights of every layer.
        """
        mask = item_ids != 0
        positions = torch.cumsum(mask.long(), dim=1) * mask.long()
        x = self.item_emb(item_ids) + self.pos_emb(positions)
        x = self.dropout(x) * mask.unsqueeze(-1)
        attention = []
        for block in self.blocks:
            x, weights = block(x, mask)
            attention.append(weights)
        return self.final_norm(x) * mask.unsqueeze(-1), attention

    def represent(self, item_ids: torch.Tensor) -> torch.Tensor:
        hidden, _ = self(item_ids)
        return hidden[:, -1]

    def next_item_logits(self, hidden: torch.Tensor) -> torch.Tensor:
        return hidden @ self.item_emb.weight[1:].T


class BaseFusion(nn.Module):
    """SASRec(S+T) fusion: one 2d -> d layer over the concatenated representations."""

    def __init__(self, hidden_size: int, activation: bool = True) -> None:
        super().__init__()
        self.hidden_size = hidden_size
        self.linear = nn.Linear(2 * hidden_size, hidden_size)
        self.activation = nn.ReLU() if activation else nn.Identity()

    def forward(self, h_source: torch.Tensor, h_target: torch.Tensor) -> torch.Tensor:
        return self.activation(self.linear(torch.cat([h_source, h_target], dim=-1)))


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def pad_sequences(sequences: Sequence[Sequence[int]], max_len: int) -> torch.Tensor:
    """Left-pad index sequences, keeping the most recent ``max_len`` items."""
    trimmed = [list(seq)[-max_len:] for seq in sequences]
    width = max((len(seq) for seq in trimmed), default=1) or 1
    batch = torch.zeros(len(trimmed), width, dtype=torch.long)
    for row, seq in enumerate(trimmed):
        if seq:
            batch[row, width - len(seq):] = torch.tensor(seq, dtype=torch.long)
    return batch


def encode_sequence(
    items: Sequence[int],
    encoder: SequenceEncoder,
    return_attention: bool = False,
):
    """Encode one sequence of vocabulary indices.

    Returns:
        ``(H, h)`` with ``H`` of shape ``(length, d)`` and ``h = H[-1]``; with
        ``return_attention`` the per-layer attention matrices are appended.

    Raises:
        ValueError: for an empty sequence or one longer than ``max_len``.
        VocabularyError: naming the first out-of-vocabulary index.
    """
    if len(items) == 0:
        raise ValueError("cannot encode an empty sequence")
    if len(items) > encoder.config.max_len:
        raise ValueError(f"sequence of length {len(items)} exceeds max_len {encoder.config.max_len}")
    for item in items:
        if not 1 <= int(item) <= encoder.config.num_items:
            raise VocabularyError(int(item), f"{encoder.domain} vocabulary")
    hidden, attention = encoder(torch.tensor([list(items)], dtype=torch.long))
    hidden = hidden[0]
    if return_attention:
        return hidden, hidden[-1], [weights[0] for weights in attention]
    return hidden, hidden[-1]


def fuse_base(h_source: torch.Tensor, h_target: torch.Tensor, fusion: BaseFusion) -> torch.Tensor:
    """Base user representation ``h_u = MLP([h^S; h^T])``."""
    width = fusion.hidden_size
    if h_source.shape[-1] != width or h_target.shape[-1] != width:
        raise ValueError(
            f"representation widths {h_source.shape[-1]} and {h_target.shape[-1]} do not match model width {width}"
        )
    return fusion(h_source, h_target)


def score_items(h: torch.Tensor, table: ItemEmbeddingTable) -> torch.Tensor:
    """Dot-product score of ``h`` against every item; column ``j`` is item ``j + 1``."""
    if h.shape[-1] != table.width:
        raise ValueError(f"query width {h.shape[-1]} does not match table width {table.width}")
    return h @ table.items.T


@dataclass
class PretrainResult:
    encoder: SequenceEncoder
    losses: List[float]


def pretrain_domain(
    sequences: Sequence[Sequence[int]],
    config: EncoderConfig,
    domain: str,
    epochs: int,
    lr: float = DEFAULT_LEARNING_RATE,
    batch_size: int = DEFAULT_BATCH_SIZE,
    seed: int = 0,
    callback: Optional[Callable[[int, float], None]] = None,
    show_progress: bool = False,
) -> PretrainResult:
    """Train an encoder on next-item prediction over one vocabulary.

    Every position of every sequence predicts the following item with a
    cross-entropy over the whole vocabulary (weights tied with the input
    table).

    Raises:
        ValueError: if no sequence has at least two items.
        TrainingDivergedError: if the epoch loss becomes non-finite.
    """
    usable = [list(seq)[-(config.max_len + 1):] for seq in sequences if len(seq) >= 2]
    if not usable:
        raise ValueError(f"no {domain} sequence has at least two items to pretrain on")
    torch.manual_seed(seed)
    generator = torch.Generator().manual_seed(seed)
    encoder = SequenceEncoder(config, domain)
    optimizer = torch.optim.Adam(encoder.parameters(), lr=lr)
    inputs = pad_sequences([seq[:-1] for seq in usable], config.max_len)
    targets = pad_sequences([seq[1:] for seq in usable], config.max_len) - 1

    losses: List[float] = []
    encoder.train()
    for epoch in tqdm(range(1, epochs + 1), desc=f"pretrain {domain}", disable=not show_progress):
        order = torch.randperm(len(usable), generator=generator)
        total, count = 0.0, 0
        for start in range(0, len(usable), batch_size):
            index = order[start:start + batch_size]
            hidden, _ = encoder(inputs[index])
            logits = encoder.next_item_logits(hidden)
            # Padding targets are -1 after the shift and are ignored.
            loss = F.cross_entropy(logits.reshape(-1, config.num_items), targets[index].reshape(-1), ignore_index=-1)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total += loss.item() * len(index)
            count += len(index)
        epoch_loss = total / count
        if not math.isfinite(epoch_loss):
            raise TrainingDivergedError(epoch, losses)
        losses.append(epoch_loss)
        if callback is not None:
            callback(epoch, epoch_loss)
    logger.info("Pretrained %s encoder for %d epochs, final loss %.4f", domain, epochs, losses[-1] if losses else float("nan"))
    encoder.eval()
    return PretrainResult(encoder, losses)


@torch.no_grad()
def next_item_accuracy(encoder: SequenceEncoder, sequences: Sequence[Sequence[int]]) -> float:
    """Fraction of positions whose next item is the top-scored item."""
    usable = [list(seq)[-(encoder.config.max_len + 1):] for seq in sequences if len(seq) >= 2]
    if not usable:
        raise ValueError("no sequence has at least two items")
    was_training = encoder.training
    encoder.eval()
    inputs = pad_sequences([seq[:-1] for seq in usable], encoder.config.max_len)
    targets = pad_sequences([seq[1:] for seq in usable], encoder.config.max_len) - 1
    hidden, _ = encoder(inputs)
    predicted = encoder.next_item_logits(hidden).argmax(dim=-1)
    valid = targets >= 0
    encoder.train(was_training)
    return float((predicted[valid] == targets[valid]).float().mean())
