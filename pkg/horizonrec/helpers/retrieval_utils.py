"""Mixed-domain segment database, top-K retrieval and retrieved noise.

Every prefix of a user's mixed sequence that ends with a target-domain item
becomes one database row: the position-filtered sum of its (windowed) item
embeddings taken from the pretrained mixed-domain table.  Queries retrieve
the most similar rows by cosine similarity, and the offsets between the
retrieved rows and the query define the noise distribution used in place of
a standard normal.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F

from horizonrec.config import DEFAULT_FILTER_C, DEFAULT_FILTER_N, DEFAULT_WINDOW
from horizonrec.exceptions import CheckpointError, RetrievalError, VocabularyError
from horizonrec.helpers.data_utils import JointVocabulary, MixedSequence
from horizonrec.helpers.encoder_utils import ItemEmbeddingTable

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CandidateSegment:
    """A mixed-sequence prefix ending at a target item.

    ``end`` (l) and ``start`` (k) are 1-based positions in the full mixed
    sequence; ``items`` holds the joint indices of positions k..l.
    """

    user_id: str
    items: Tuple[int, ...]
    end: int
    start: int


@dataclass
class RetrievedNoise:
    mean: torch.Tensor
    std: torch.Tensor
    sample: torch.Tensor
    segment_ids: torch.Tensor


class RowGenerators:
    """One generator per batch row, so a row's draws do not depend on the rest of its batch."""

    def __init__(self, seeds: Sequence[int]) -> None:
        self.generators = [torch.Generator().manual_seed(int(seed)) for seed in seeds]

    def __len__(self) -> int:
        return len(self.generators)

    def normal(self, shape: Sequence[int], dtype: torch.dtype) -> torch.Tensor:
        shape = tuple(shape)
        if not shape or shape[0] != len(self.generators):
            raise ValueError(f"{len(self.generators)} row generators cannot fill shape {shape}")
        return torch.stack([torch.randn(shape[1:], generator=g, dtype=dtype) for g in self.generators])


NoiseSource = Union[torch.Generator, RowGenerators, None]


def standard_normal(
    shape: Sequence[int],
    generator: NoiseSource = None,
    dtype: torch.dtype = torch.float32,
) -> torch.Tensor:
    if isinstance(generator, RowGenerators):
        return generator.normal(shape, dtype)
    return torch.randn(tuple(shape), generator=generator, dtype=dtype)


# ---------------------------------------------------------------------------
# Candidates and the position filter
# ---------------------------------------------------------------------------

def extract_candidates(
    user_id: str,
    mixed_items: Sequence[int],
    vocab: JointVocabulary,
    window: int = DEFAULT_WINDOW,
) -> List[CandidateSegment]:
    """List the prefixes (length > 1) of a joint-index sequence ending in a target item."""
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    candidates = []
    for end in range(2, len(mixed_items) + 1):
        if vocab.is_target_joint(mixed_items[end - 1]):
            start = max(1, end - window + 1)
            candidates.append(CandidateSegment(user_id, tuple(mixed_items[start - 1:end]), end, start))
    return candidates


def extract_mixed_candidates(
    mixed: MixedSequence,
    vocab: JointVocabulary,
    window: int = DEFAULT_WINDOW,
) -> List[CandidateSegment]:
    """:func:`extract_candidates` for a :class:`MixedSequence` of raw item ids."""
    return extract_candidates(
        mixed.user_id,
        [vocab.joint_index(item, domain) for item, domain in mixed.items],
        vocab,
        window,
    )


def lowpass_weight(j: int, end: int, start: int, c: float = DEFAULT_FILTER_C, n: float = DEFAULT_FILTER_N) -> float:
    """Weight ``c - 1 / (1 + (j / (l - j + 1)) ** n)`` of position ``j`` in segment ``[k, l]``.

    The weight grows towards the end of the segment.
    """
    if not start <= j <= end:
        raise ValueError(f"position {j} outside segment [{start}, {end}]")
    if n < 1:
        raise ValueError(f"decay rate n must be >= 1, got {n}")
    if c <= 1:
        raise ValueError(f"weight level c must be > 1, got {c}")
    return c - 1.0 / (1.0 + (j / (end - j + 1)) ** n)


def lowpass_weights(end: int, start: int, c: float = DEFAULT_FILTER_C, n: float = DEFAULT_FILTER_N) -> np.ndarray:
    """Vectorised :func:`lowpass_weight` for every position ``start..end``."""
    if n < 1 or c <= 1:
        raise ValueError(f"invalid filter constants c={c}, n={n}")
    j = np.arange(start, end + 1, dtype=np.float64)
    return c - 1.0 / (1.0 + (j / (end - j + 1)) ** n)


def embed_candidate(
    segment: CandidateSegment,
    table: ItemEmbeddingTable,
    c: float = DEFAULT_FILTER_C,
    n: float = DEFAULT_FILTER_N,
) -> torch.Tensor:
    """Position-filtered sum of the segment's item embeddings."""
    for item in segment.items:
        if not 1 <= item <= table.num_items:
            raise VocabularyError(item, f"{table.domain} embedding table")
    weights = torch.as_tensor(lowpass_weights(segment.end, segment.start, c, n), dtype=table.weight.dtype)
    rows = table.weight[torch.tensor(segment.items, dtype=torch.long)]
    return weights @ rows


# ---------------------------------------------------------------------------
# Database
# ---------------------------------------------------------------------------

@dataclass
class RetrievalDatabase:
    """Flat store of segment embeddings with provenance.

    ``embeddings`` are the raw filtered sums used for noise construction;
    ``normalized`` holds their unit-length copies used for cosine search.
    """

    embeddings: torch.Tensor
    normalized: torch.Tensor
    provenance: List[Tuple[str, int]]
    c: float
    n: float
    window: int

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    @property
    def width(self) -> int:
        return self.embeddings.shape[1]

    def state(self) -> dict:
        return {
            "header": {"rows": len(self), "width": self.width, "c": self.c, "n": self.n, "window": self.window},
            "embeddings": self.embeddings,
            "normalized": self.normalized,
            "provenance": [list(entry) for entry in self.provenance],
        }

    @classmethod
    def from_state(cls, state: dict) -> "RetrievalDatabase":
        try:
            header = state["header"]
            database = cls(
                embeddings=state["embeddings"],
                normalized=state["normalized"],
                provenance=[(str(user), int(end)) for user, end in state["provenance"]],
                c=float(header["c"]),
                n=float(header["n"]),
                window=int(header["window"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CheckpointError(f"malformed retrieval database: {exc}") from exc
        if len(database) != header["rows"] or database.width != header["width"]:
            raise CheckpointError("retrieval database header does not match its matrix")
        return database

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.state(), path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "RetrievalDatabase":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"retrieval database not found: {path}")
        return cls.from_state(torch.load(path, map_location="cpu"))


def build_database(
    sequences: Sequence[Tuple[str, Sequence[int]]],
    table: ItemEmbeddingTable,
    vocab: JointVocabulary,
    c: float = DEFAULT_FILTER_C,
    n: float = DEFAULT_FILTER_N,
    window: int = DEFAULT_WINDOW,
) -> RetrievalDatabase:
    """Embed every candidate segment of every ``(user_id, joint indices)`` sequence.

    Only training-portion sequences should be passed so that held-out items
    cannot reach the model through retrieval.

    Raises:
        RetrievalError: if no sequence yields a candidate.
    """
    rows: List[torch.Tensor] = []
    provenance: List[Tuple[str, int]] = []
    with torch.no_grad():
        weight = table.weight.detach()
        frozen = ItemEmbeddingTable(table.domain, weight)
        for user_id, items in sequences:
            for segment in extract_candidates(user_id, items, vocab, window):
                rows.append(embed_candidate(segment, frozen, c, n))
                provenance.append((segment.user_id, segment.end))
    if not rows:
        raise RetrievalError("retrieval database is empty: no mixed prefix ends with a target item")
    embeddings = torch.stack(rows)
    if not torch.isfinite(embeddings).all():
        raise RetrievalError("retrieval database contains non-finite rows")
    logger.info("Built retrieval database with %d segments from %d users.", len(rows), len(sequences))
    return RetrievalDatabase(
        embeddings=embeddings,
        normalized=F.normalize(embeddings, dim=-1),
        provenance=provenance,
        c=c,
        n=n,
        window=window,
    )


def retrieve_topk(query: torch.Tensor, database: RetrievalDatabase, k: int) -> Tuple[torch.Tensor, torch.Tensor]:
    """Indices and cosine similarities of the ``k`` rows most similar to ``query``.

    ``query`` is ``(d,)`` or ``(batch, d)``.  Ties go to the lower row index.
    When ``k`` exceeds the database size every row is returned.

    Raises:
        ValueError: if ``k < 1`` or the widths differ.
        RetrievalError: if the database is empty.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(database) == 0:
        raise RetrievalError("cannot retrieve from an empty database")
    if query.shape[-1] != database.width:
        raise ValueError(f"query width {query.shape[-1]} does not match database width {database.width}")
    if k > len(database):
        logger.warning("Requested %d segments but the database holds %d; returning all rows.", k, len(database))
        k = len(database)
    single = query.dim() == 1
    queries = F.normalize(query.reshape(-1, database.width).to(database.normalized.dtype), dim=-1)
    similarity = queries @ database.normalized.T
    # A stable descending sort keeps lower row indices first among ties.
    order = torch.sort(similarity, dim=-1, descending=True, stable=True).indices[:, :k]
    scores = torch.gather(similarity, 1, order)
    if single:
        return order[0], scores[0]
    return order, scores


def sample_retrieved_noise(
    query: torch.Tensor,
    segments: torch.Tensor,
    generator: NoiseSource = None,
    segment_ids: Optional[torch.Tensor] = None,
) -> RetrievedNoise:
    """Build ``z = mu + sigma * xi`` from the retrieved segments.

    ``mu`` and ``sigma`` are the mean and population standard deviation of
    the offsets ``d_i - h`` over the ``K`` segments, per dimension.
    ``query`` is ``(d,)`` with ``segments`` ``(K, d)``, or batched as
    ``(batch, d)`` and ``(batch, K, d)``.
    """
    if segments.shape[-2] < 1:
        raise ValueError("at least one retrieved segment is required")
    if segments.shape[-2] == 1:
        logger.warning("Only one segment retrieved; the retrieved noise is deterministic.")
    offsets = segments - query.unsqueeze(-2)
    mean = offsets.mean(dim=-2)
    std = offsets.std(dim=-2, correction=0)
    xi = standard_normal(mean.shape, generator, mean.dtype)
    if segment_ids is None:
        segment_ids = torch.empty(0, dtype=torch.long)
    return RetrievedNoise(mean=mean, std=std, sample=mean + std * xi, segment_ids=segment_ids)


def retrieve_noise(
    query: torch.Tensor,
    database: RetrievalDatabase,
    k: int,
    generator: NoiseSource = None,
) -> RetrievedNoise:
    """Retrieve the top-``k`` rows for each query and sample noise from them."""
    ids, _ = retrieve_topk(query, database, k)
    segments = database.embeddings[ids].to(query.dtype)
    return sample_retrieved_noise(query, segments, generator, ids)
