"""Run manifests, seeds, output guards and thread limits shared by the commands."""

from __future__ import annotations

import json
import logging
import os
import secrets
import shutil
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import torch

from horizonrec.config import THREADS

logger = logging.getLogger(__name__)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


@dataclass
class RunManifest:
    command: str
    config: Dict[str, Any] = field(default_factory=dict)
    dataset_hash: Optional[str] = None
    seed: Optional[int] = None
    started_at: str = field(default_factory=_now)
    finished_at: Optional[str] = None
    artifacts: Dict[str, str] = field(default_factory=dict)

    def add_artifact(self, name: str, path: str | Path) -> None:
        self.artifacts[name] = str(path)

    def write(self, path: str | Path) -> Path:
        """Stamp the end time and write the manifest atomically as JSON."""
        self.finished_at = _now()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(json.dumps(asdict(self), indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
        os.replace(tmp, path)
        return path


def manifest_path(output: str | Path) -> Path:
    """``DIR/manifest.json`` for directory outputs, ``FILE.manifest.json`` otherwise."""
    output = Path(output)
    if output.is_dir() or not output.suffix:
        return output / "manifest.json"
    return output.with_name(output.name + ".manifest.json")


def default_run_dir(anchor: str | Path, command: str) -> Path:
    """``ANCHOR.runs/COMMAND-<UTC time>``, the output of a run given no ``--out``."""
    anchor = Path(anchor)
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%f")
    return anchor.with_name(anchor.name + ".runs") / f"{command}-{stamp}"


def resolve_seed(seed: Optional[int]) -> int:
    if seed is not None:
        return seed
    seed = secrets.randbelow(2**31)
    logger.warning("No --seed given; using randomly selected seed %d.", seed)
    return seed


def guard_output(path: str | Path, overwrite: bool = False) -> Path:
    """Refuse to replace an existing output unless ``overwrite`` is set.

    Raises:
        FileExistsError: if ``path`` exists (and is not an empty directory)
            and ``overwrite`` is false.
    """
    path = Path(path)
    if not path.exists():
        return path
    if path.is_dir() and not any(path.iterdir()):
        return path
    if not overwrite:
        raise FileExistsError(f"output already exists: {path} (pass --overwrite to replace it)")
    logger.info("Overwriting %s", path)
    if path.is_dir():
        shutil.rmtree(path)
    else:
        path.unlink()
    return path


def apply_thread_limit(threads: Optional[int] = THREADS) -> None:
    if threads is not None:
        if threads < 1:
            raise ValueError(f"thread limit must be positive, got {threads}")
        torch.set_num_threads(threads)
        logger.debug("Limited torch to %d threads.", threads)
