"""Checkpoint containers for pretrained encoders and trained models."""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

import torch

from horizonrec.exceptions import CheckpointError
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.encoder_utils import EncoderConfig, SequenceEncoder
from horizonrec.helpers.model_utils import HorizonRec, TrainConfig
from horizonrec.helpers.retrieval_utils import RetrievalDatabase

logger = logging.getLogger(__name__)

ENCODER_KIND = "horizonrec-encoder"
MODEL_KIND = "horizonrec-model"


def _read(path: str | Path, kind: str) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    try:
        state = torch.load(path, map_location="cpu")
    except Exception as exc:  # torch raises several unrelated types for corrupt files
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(state, dict) or state.get("kind") != kind:
        raise CheckpointError(f"{path} is not a {kind} checkpoint")
    return state


def _write(state: Dict[str, Any], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(state, path)
    return path


# ---------------------------------------------------------------------------
# Encoders
# ---------------------------------------------------------------------------

def save_encoder(encoder: SequenceEncoder, path: str | Path, losses: Optional[List[float]] = None) -> Path:
    return _write(
        {
            "kind": ENCODER_KIND,
            "domain": encoder.domain,
            "config": dataclasses.asdict(encoder.config),
            "state": encoder.state_dict(),
            "losses": list(losses or []),
        },
        path,
    )


def load_encoder(path: str | Path) -> SequenceEncoder:
    state = _read(path, ENCODER_KIND)
    encoder = SequenceEncoder(EncoderConfig(**state["config"]), state["domain"])
    try:
        encoder.load_state_dict(state["state"])
    except RuntimeError as exc:
        raise CheckpointError(f"encoder checkpoint {path} is inconsistent: {exc}") from exc
    encoder.eval()
    return encoder


def load_encoder_dir(directory: str | Path) -> Dict[str, SequenceEncoder]:
    """Load ``encoder_{source,target,mixed}.pt`` from a pretraining output directory."""
    directory = Path(directory)
    encoders = {}
    for name in ("source", "target", "mixed"):
        path = directory / f"encoder_{name}.pt"
        if path.exists():
            encoders[name] = load_encoder(path)
    if not encoders:
        raise FileNotFoundError(f"checkpoint not found: no encoder_*.pt in {directory}")
    return encoders


# ---------------------------------------------------------------------------
# Trained model
# ---------------------------------------------------------------------------

@dataclass
class ModelCheckpoint:
    model: HorizonRec
    database: Optional[RetrievalDatabase]
    dataset_dir: Optional[str]
    dataset_hash: Optional[str]
    vocab_sizes: Dict[str, int]
    reports: List[Dict[str, Any]]


def save_model(
    model: HorizonRec,
    path: str | Path,
    database: Optional[RetrievalDatabase] = None,
    dataset_dir: Optional[str | Path] = None,
    dataset_hash: Optional[str] = None,
    reports: Optional[List[Dict[str, Any]]] = None,
) -> Path:
    """Store config, parameters, schedule, database and dataset provenance in one file."""
    return _write(
        {
            "kind": MODEL_KIND,
            "config": model.config.to_dict(),
            "vocab_sizes": {"source": model.num_source, "target": model.num_target},
            "state": model.state_dict(),
            "schedule": model.schedule.state(),
            "database": database.state() if database is not None else None,
            "dataset_dir": str(dataset_dir) if dataset_dir is not None else None,
            "dataset_hash": dataset_hash,
            "reports": list(reports or []),
        },
        path,
    )


def load_model(path: str | Path, dataset: Optional[CrossDomainDataset] = None) -> ModelCheckpoint:
    """Rebuild a trained model.

    Without ``dataset`` the dataset directory recorded in the checkpoint is
    loaded.

    Raises:
        FileNotFoundError: if the checkpoint is missing.
        CheckpointError: if it is unreadable or its vocabulary sizes differ
            from the dataset's.
    """
    state = _read(path, MODEL_KIND)
    config = TrainConfig.from_mapping(state["config"])
    if dataset is None:
        if not state.get("dataset_dir"):
            raise CheckpointError(f"{path} records no dataset directory; pass one explicitly")
        dataset = CrossDomainDataset.load(state["dataset_dir"], max_len=config.max_len)
    sizes = state["vocab_sizes"]
    if sizes["source"] != dataset.vocab.num_source or sizes["target"] != dataset.vocab.num_target:
        raise CheckpointError(
            f"checkpoint vocabulary sizes {sizes} do not match dataset "
            f"(source {dataset.vocab.num_source}, target {dataset.vocab.num_target})"
        )
    if state.get("dataset_hash") and state["dataset_hash"] != dataset.content_hash():
        logger.warning("Dataset content differs from the one the checkpoint was trained on.")
    model = HorizonRec(config, dataset.vocab)
    try:
        model.load_state_dict(state["state"])
    except RuntimeError as exc:
        raise CheckpointError(f"model checkpoint {path} is inconsistent: {exc}") from exc
    model.eval()
    database = RetrievalDatabase.from_state(state["database"]) if state.get("database") else None
    return ModelCheckpoint(
        model=model,
        database=database,
        dataset_dir=state.get("dataset_dir"),
        dataset_hash=state.get("dataset_hash"),
        vocab_sizes=dict(sizes),
        reports=list(state.get("reports", [])),
    )
