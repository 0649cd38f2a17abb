"""HorizonRec model: encoders, base fusion, dual diffusion branch and ablation wiring."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F
from torch import nn

from horizonrec.config import (
    DEFAULT_BATCH_SIZE,
    DEFAULT_BETA_END,
    DEFAULT_BETA_START,
    DEFAULT_DIFFUSION_WEIGHT,
    DEFAULT_DROPOUT,
    DEFAULT_EPOCHS,
    DEFAULT_FILTER_C,
    DEFAULT_FILTER_N,
    DEFAULT_FUSION_WEIGHT,
    DEFAULT_HIDDEN_SIZE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_MAX_LEN,
    DEFAULT_NUM_LAYERS,
    DEFAULT_PATIENCE,
    DEFAULT_STEPS,
    DEFAULT_TOP_K,
    DEFAULT_WINDOW,
)
from horizonrec.exceptions import CheckpointError, ConfigError, RetrievalError, VocabularyError
from horizonrec.helpers.data_utils import Domain, JointVocabulary, SequenceExample
from horizonrec.helpers.diffusion_utils import (
    ConditionalDenoiser,
    dual_diffusion_loss,
    forward_noise,
    make_schedule,
    reverse_chain,
)
from horizonrec.helpers.encoder_utils import (
    BaseFusion,
    EncoderConfig,
    ItemEmbeddingTable,
    SequenceEncoder,
    UserStateBundle,
    fuse_base,
    pad_sequences,
    score_items,
)
from horizonrec.helpers.retrieval_utils import (
    NoiseSource,
    RetrievalDatabase,
    RowGenerators,
    retrieve_noise,
    standard_normal,
)

logger = logging.getLogger(__name__)


class AblationVariant(str, Enum):
    FULL = "full"
    DPD_S = "DPD_S"
    DPD_T = "DPD_T"
    NO_DPD = "no_DPD"
    NO_MDR = "no_MDR"
    NO_DMS = "no_DMs"
    NO_DPD_MDR = "no_DPD_MDR"
    # SASRec(S+T): same wiring as no_DPD_MDR, kept as its own name for reports.
    BASE = "base"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


@dataclass
class TrainConfig:
    fusion_weight: float = DEFAULT_FUSION_WEIGHT
    diffusion_weight: float = DEFAULT_DIFFUSION_WEIGHT
    top_k: int = DEFAULT_TOP_K
    steps: int = DEFAULT_STEPS
    beta_start: float = DEFAULT_BETA_START
    beta_end: float = DEFAULT_BETA_END
    batch_size: int = DEFAULT_BATCH_SIZE
    hidden_size: int = DEFAULT_HIDDEN_SIZE
    max_len: int = DEFAULT_MAX_LEN
    num_layers: int = DEFAULT_NUM_LAYERS
    dropout: float = DEFAULT_DROPOUT
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    patience: int = DEFAULT_PATIENCE
    seed: int = 0
    variant: str = AblationVariant.FULL.value
    freeze_encoders: bool = False
    filter_c: float = DEFAULT_FILTER_C
    filter_n: float = DEFAULT_FILTER_N
    window: int = DEFAULT_WINDOW

    def __post_init__(self) -> None:
        if not 0.0 <= self.fusion_weight <= 1.0:
            raise ConfigError(f"fusion_weight must lie in [0, 1], got {self.fusion_weight}")
        if self.diffusion_weight < 0:
            raise ConfigError(f"diffusion_weight must be >= 0, got {self.diffusion_weight}")
        if self.top_k < 0:
            raise ConfigError(f"top_k must be >= 0, got {self.top_k}")
        for name in ("steps", "batch_size", "hidden_size", "max_len", "epochs", "num_layers", "window"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        try:
            self.variant = AblationVariant(self.variant).value
        except ValueError:
            raise ConfigError(f"unknown ablation variant {self.variant!r}") from None

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: Optional["TrainConfig"] = None) -> "TrainConfig":
        """Build a config from string or typed values keyed by field name."""
        known = {field.name: field for field in dataclasses.fields(cls)}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        merged = dataclasses.asdict(base) if base is not None else {}
        for key, raw in values.items():
            merged[key] = _coerce(key, known[key].type, raw)
        return cls(**merged)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def encoder_config(self, num_items: int) -> EncoderConfig:
        return EncoderConfig(
            num_items=num_items,
            hidden_size=self.hidden_size,
            max_len=self.max_len,
            num_layers=self.num_layers,
            dropout=self.dropout,
        )


def _coerce(key: str, annotation: str, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if annotation == "bool":
            lowered = text.lower()
            if lowered in _TRUE:
                return True
            if lowered in _FALSE:
                return False
            raise ValueError(text)
        if annotation == "int":
            return int(text)
        if annotation == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"config key {key} expects {annotation}, got {raw!r}") from None
    return text


# ---------------------------------------------------------------------------
# Ablation wiring
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelWiring:
    diffuse_source: bool = True
    diffuse_target: bool = True
    # Whether the source reconstruction enters the intermediate representation.
    include_source: bool = True
    use_retrieval: bool = True
    mixed_condition: bool = True
    base_only: bool = False

    @property
    def diffusion_enabled(self) -> bool:
        return not self.base_only and (self.diffuse_source or self.diffuse_target)


FULL_WIRING = ModelWiring()


def apply_ablation(variant: str | AblationVariant, wiring: ModelWiring = FULL_WIRING) -> ModelWiring:
    """Return ``wiring`` modified for one ablation variant.

    Raises:
        ValueError: for an unknown variant name.
    """
    try:
        variant = AblationVariant(variant)
    except ValueError:
        raise ValueError(f"unknown ablation variant {variant!r}") from None
    if variant is AblationVariant.FULL:
        return wiring
    if variant is AblationVariant.DPD_S:
        return dataclasses.replace(wiring, diffuse_target=False)
    if variant is AblationVariant.DPD_T:
        return dataclasses.replace(wiring, diffuse_source=False)
    if variant is AblationVariant.NO_DPD:
        return dataclasses.replace(wiring, diffuse_source=False, include_source=False, mixed_condition=False)
    if variant is AblationVariant.NO_MDR:
        return dataclasses.replace(wiring, use_retrieval=False)
    if variant is AblationVariant.NO_DMS:
        return dataclasses.replace(wiring, diffuse_source=False, diffuse_target=False)
    return dataclasses.replace(
        wiring, diffuse_source=False, diffuse_target=False, use_retrieval=False, base_only=True
    )


# ---------------------------------------------------------------------------
# Fusion and losses
# ---------------------------------------------------------------------------

def fuse_final(h_source0: torch.Tensor, h_target0: torch.Tensor, h_base: torch.Tensor, w: float) -> torch.Tensor:
    """``(1 - w) * (h^S_0 + h^T_0) + w * h_u``."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"fusion weight must lie in [0, 1], got {w}")
    return (1.0 - w) * (h_source0 + h_target0) + w * h_base


def rec_loss(h_final: torch.Tensor, labels: torch.Tensor, table: ItemEmbeddingTable) -> torch.Tensor:
    """Full-catalogue cross-entropy of the ground-truth target items (1-based indices)."""
    labels = torch.as_tensor(labels, dtype=torch.long)
    bad = (labels < 1) | (labels > table.num_items)
    if bool(bad.any()):
        raise VocabularyError(int(labels[bad][0]), f"{table.domain} vocabulary")
    return F.cross_entropy(score_items(h_final, table), labels - 1)


# ---------------------------------------------------------------------------
# Batches
# ---------------------------------------------------------------------------

@dataclass
class SequenceBatch:
    users: List[str]
    source: torch.Tensor
    target: torch.Tensor
    mixed: torch.Tensor
    labels: torch.Tensor

    def __len__(self) -> int:
        return len(self.users)


def collate(examples: Sequence[SequenceExample], max_len: int) -> SequenceBatch:
    return SequenceBatch(
        users=[example.user_id for example in examples],
        source=pad_sequences([example.source for example in examples], max_len),
        target=pad_sequences([example.target for example in examples], max_len),
        mixed=pad_sequences([example.mixed for example in examples], max_len),
        labels=torch.tensor([example.label for example in examples], dtype=torch.long),
    )


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

@dataclass
class ForwardOutput:
    bundle: UserStateBundle
    diffusion_pairs: List[Tuple[torch.Tensor, torch.Tensor]]


class HorizonRec(nn.Module):
    """Three encoders, the SASRec(S+T) fusion MLP and one shared denoiser."""

    def __init__(self, config: TrainConfig, vocab: JointVocabulary) -> None:
        super().__init__()
        self.config = config
        self.num_source = vocab.num_source
        self.num_target = vocab.num_target
        self.source_encoder = SequenceEncoder(config.encoder_config(vocab.num_source), Domain.SOURCE.value)
        self.target_encoder = SequenceEncoder(config.encoder_config(vocab.num_target), Domain.TARGET.value)
        self.mixed_encoder = SequenceEncoder(config.encoder_config(vocab.num_joint), "mixed")
        self.fusion = BaseFusion(config.hidden_size)
        self.denoiser = ConditionalDenoiser(config.hidden_size)
        self.schedule = make_schedule(config.steps, config.beta_start, config.beta_end)
        self.wiring = apply_ablation(config.variant)
        if config.top_k == 0 and self.wiring.use_retrieval:
            # Zero retrieved segments degenerates to standard Gaussian diffusion.
            self.wiring = dataclasses.replace(self.wiring, use_retrieval=False)
        if config.freeze_encoders:
            self.freeze_encoders()

    def freeze_encoders(self) -> None:
        for encoder in (self.source_encoder, self.target_encoder, self.mixed_encoder):
            for parameter in encoder.parameters():
                parameter.requires_grad_(False)

    def load_pretrained(self, encoders: Mapping[str, SequenceEncoder]) -> None:
        """Copy pretrained encoder weights (keys ``source``, ``target``, ``mixed``)."""
        slots = {"source": self.source_encoder, "target": self.target_encoder, "mixed": self.mixed_encoder}
        for name, pretrained in encoders.items():
            if name not in slots:
                raise CheckpointError(f"unknown encoder slot {name!r}")
            try:
                slots[name].load_state_dict(pretrained.state_dict())
            except RuntimeError as exc:
                raise CheckpointError(f"pretrained {name} encoder does not fit the model: {exc}") from exc
            logger.info("Initialised %s encoder from pretrained weights.", name)

    def target_table(self) -> ItemEmbeddingTable:
        return self.target_encoder.table()

    def encode(self, batch: SequenceBatch) -> UserStateBundle:
        h_source = self.source_encoder.represent(batch.source)
        h_target = self.target_encoder.represent(batch.target)
        h_mixed = self.mixed_encoder.represent(batch.mixed)
        return UserStateBundle(
            h_source=h_source,
            h_target=h_target,
            h_mixed=h_mixed,
            h_base=fuse_base(h_source, h_target, self.fusion),
        )

    def _noise(
        self,
        h: torch.Tensor,
        database: Optional[RetrievalDatabase],
        generator: NoiseSource,
    ) -> torch.Tensor:
        if not self.wiring.use_retrieval:
            return standard_normal(h.shape, generator, h.dtype)
        if database is None:
            raise RetrievalError("this model variant needs a retrieval database")
        return retrieve_noise(h.detach(), database, self.config.top_k, generator).sample.to(h.dtype)

    def forward(
        self,
        batch: SequenceBatch,
        database: Optional[RetrievalDatabase] = None,
        generator: NoiseSource = None,
        full_chain: bool = False,
    ) -> ForwardOutput:
        """Run encoders, the diffusion branch and fusion.

        With ``full_chain`` every diffused representation is noised to step T
        and reconstructed by the full reverse chain (inference); otherwise a
        random step per row and a single denoiser call are used (training).
        """
        if isinstance(generator, RowGenerators) and not full_chain:
            raise ValueError("per-row generators only drive the full inference chain")
        bundle = self.encode(batch)
        pairs: List[Tuple[torch.Tensor, torch.Tensor]] = []
        condition = bundle.h_mixed if self.wiring.mixed_condition else torch.zeros_like(bundle.h_mixed)
        active = {Domain.SOURCE: self.wiring.diffuse_source, Domain.TARGET: self.wiring.diffuse_target}
        for domain, h in ((Domain.SOURCE, bundle.h_source), (Domain.TARGET, bundle.h_target)):
            if self.wiring.base_only or not active[domain]:
                bundle.reconstructed[domain] = h
                continue
            z = self._noise(h, database, generator)
            if full_chain:
                t = torch.full((len(batch),), self.schedule.steps, dtype=torch.long)
            else:
                t = torch.randint(1, self.schedule.steps + 1, (len(batch),), generator=generator)
            noised = forward_noise(h, z, t, self.schedule, domain)
            bundle.noised[domain] = noised.state
            if full_chain:
                reconstructed = reverse_chain(noised.state, condition, self.schedule, self.denoiser, domain)
            else:
                reconstructed = self.denoiser(noised.state, condition, t, domain)
            bundle.reconstructed[domain] = reconstructed
            pairs.append((h, reconstructed))

        if self.wiring.base_only:
            bundle.h_final = bundle.h_base
        else:
            source0 = bundle.reconstructed[Domain.SOURCE]
            if not self.wiring.include_source:
                source0 = torch.zeros_like(source0)
            target0 = bundle.reconstructed[Domain.TARGET]
            bundle.h_intermediate = source0 + target0
            bundle.h_final = fuse_final(source0, target0, bundle.h_base, self.config.fusion_weight)
        return ForwardOutput(bundle, pairs)

    def losses(
        self,
        batch: SequenceBatch,
        database: Optional[RetrievalDatabase] = None,
        generator: NoiseSource = None,
    ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """``(total, rec, diff)`` with ``total = rec + lambda * diff``."""
        output = self(batch, database, generator)
        rec = rec_loss(output.bundle.h_final, batch.labels, self.target_table())
        diff = dual_diffusion_loss(output.diffusion_pairs).to(rec.dtype)
        return rec + self.config.diffusion_weight * diff, rec, diff

    def scores(self, h_final: torch.Tensor) -> torch.Tensor:
        return score_items(h_final, self.target_table())
