"""Exception hierarchy shared by the horizonrec helpers and commands."""

from __future__ import annotations

from typing import Optional, Sequence


class HorizonRecError(Exception):
    """Base class for errors the command line reports as a one-line diagnostic."""


class ConfigError(HorizonRecError, ValueError):
    """A configuration file or environment variable could not be interpreted."""


class DataFormatError(HorizonRecError, ValueError):
    """A row of an interaction file or dataset directory is malformed."""

    def __init__(self, path: str, line: int, message: str) -> None:
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class VocabularyError(HorizonRecError, LookupError):
    """An item id is not part of the vocabulary it is looked up in."""

    def __init__(self, item_id: object, where: str = "vocabulary") -> None:
        self.item_id = item_id
        super().__init__(f"item {item_id!r} is not in the {where}")

    def __str__(self) -> str:
        # LookupError would otherwise repr() the message.
        return self.args[0]


class RetrievalError(HorizonRecError, RuntimeError):
    """The retrieval database cannot serve a query."""


class DiffusionError(HorizonRecError, RuntimeError):
    """The reverse chain produced a non-finite state."""

    def __init__(self, step: int, message: str = "non-finite state in reverse chain") -> None:
        self.step = step
        super().__init__(f"{message} at step {step}")


class TrainingDivergedError(HorizonRecError, RuntimeError):
    """A training loss became non-finite."""

    def __init__(self, epoch: int, losses: Optional[Sequence[float]] = None) -> None:
        self.epoch = epoch
        self.losses = list(losses or [])
        recent = ", ".join(f"{value:.6g}" for value in self.losses[-5:]) or "none"
        super().__init__(f"loss became non-finite in epoch {epoch} (last finite losses: {recent})")


class CheckpointError(HorizonRecError, RuntimeError):
    """A checkpoint is unreadable or does not match the dataset it is used with."""


__all__ = [
    "HorizonRecError",
    "ConfigError",
    "DataFormatError",
    "VocabularyError",
    "RetrievalError",
    "DiffusionError",
    "TrainingDivergedError",
    "CheckpointError",
]
