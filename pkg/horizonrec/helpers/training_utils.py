"""Joint training loop: L = L_rec + lambda * L_diff with validation early stopping."""

from __future__ import annotations

import copy
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, List, Mapping, Optional, Sequence

import torch
from tqdm import tqdm

from horizonrec.config import EVAL_SEED
from horizonrec.exceptions import TrainingDivergedError
from horizonrec.helpers.data_utils import CrossDomainDataset, SequenceExample
from horizonrec.helpers.encoder_utils import SequenceEncoder
from horizonrec.helpers.eval_utils import evaluate_examples
from horizonrec.helpers.model_utils import HorizonRec, TrainConfig, collate
from horizonrec.helpers.retrieval_utils import RetrievalDatabase

logger = logging.getLogger(__name__)

VALIDATION_CUTOFF = 10


@dataclass
class LossReport:
    epoch: int
    rec_loss: float
    diff_loss: float
    total_loss: float
    wall_time: float
    validation_ndcg: Optional[float] = None


@dataclass
class TrainResult:
    model: HorizonRec
    reports: List[LossReport] = field(default_factory=list)
    best_epoch: int = 0
    best_ndcg: Optional[float] = None


def iterate_batches(
    examples: Sequence[SequenceExample],
    batch_size: int,
    max_len: int,
    generator: Optional[torch.Generator] = None,
):
    """Yield collated batches, shuffled with ``generator`` when one is given."""
    if generator is not None:
        order = torch.randperm(len(examples), generator=generator).tolist()
    else:
        order = list(range(len(examples)))
    for start in range(0, len(order), batch_size):
        chunk = [examples[i] for i in order[start:start + batch_size]]
        if not chunk:
            logger.warning("Skipping empty batch at offset %d.", start)
            continue
        yield collate(chunk, max_len)


def _run_epoch(
    model: HorizonRec,
    optimizer: torch.optim.Optimizer,
    examples: Sequence[SequenceExample],
    database: Optional[RetrievalDatabase],
    config: TrainConfig,
    generator: torch.Generator,
    epoch: int,
    history: Sequence[float],
) -> tuple[float, float]:
    model.train()
    rec_total, diff_total, count = 0.0, 0.0, 0
    for batch in iterate_batches(examples, config.batch_size, config.max_len, generator):
        total, rec, diff = model.losses(batch, database, generator)
        if not torch.isfinite(total):
            raise TrainingDivergedError(epoch, history)
        optimizer.zero_grad()
        total.backward()
        optimizer.step()
        rec_total += rec.item() * len(batch)
        diff_total += diff.item() * len(batch)
        count += len(batch)
    return rec_total / count, diff_total / count


def train(
    dataset: CrossDomainDataset,
    encoders: Optional[Mapping[str, SequenceEncoder]],
    database: Optional[RetrievalDatabase],
    config: TrainConfig,
    callback: Optional[Callable[[LossReport], None]] = None,
    validate: bool = True,
    show_progress: bool = False,
) -> TrainResult:
    """Train a :class:`HorizonRec` model end to end.

    Every epoch shuffles the training instances, resamples diffusion steps
    and retrieved noise, and (with ``validate``) scores the validation items
    with the full inference path.  The parameters with the best validation
    NDCG@10 are restored at the end; training stops after ``config.patience``
    epochs without improvement.

    Args:
        dataset: Preprocessed cross-domain dataset.
        encoders: Pretrained encoders keyed ``source``, ``target``,
            ``mixed``; ``None`` trains from random initialisation.
        database: Retrieval database; may be ``None`` only for variants
            that do not retrieve.
        config: Training configuration.
        callback: Called with each epoch's :class:`LossReport`.
        validate: Whether to run validation and early stopping.
        show_progress: Show a progress bar over epochs.

    Raises:
        ValueError: if the dataset yields no training instance.
        TrainingDivergedError: if a loss becomes non-finite.
    """
    examples = dataset.examples("train")
    if not examples:
        raise ValueError("dataset yields no training instances")
    validation = dataset.examples("validation") if validate else []

    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    model = HorizonRec(config, dataset.vocab)
    if encoders:
        model.load_pretrained(encoders)
    trainable = [parameter for parameter in model.parameters() if parameter.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=config.learning_rate)

    result = TrainResult(model=model)
    best_state = None
    stale = 0
    totals: List[float] = []
    logger.info(
        "Training variant %s on %d instances (%d validation) for up to %d epochs.",
        config.variant,
        len(examples),
        len(validation),
        config.epochs,
    )
    for epoch in tqdm(range(1, config.epochs + 1), desc=f"train {config.variant}", disable=not show_progress):
        started = time.perf_counter()
        rec, diff = _run_epoch(model, optimizer, examples, database, config, generator, epoch, totals)
        report = LossReport(
            epoch=epoch,
            rec_loss=rec,
            diff_loss=diff,
            total_loss=rec + config.diffusion_weight * diff,
            wall_time=time.perf_counter() - started,
        )
        if not math.isfinite(report.total_loss):
            raise TrainingDivergedError(epoch, totals)
        totals.append(report.total_loss)

        if validation:
            metrics = evaluate_examples(
                model, validation, database, ks=(VALIDATION_CUTOFF,), seed=EVAL_SEED, batch_size=config.batch_size
            )
            report.validation_ndcg = metrics[f"NDCG@{VALIDATION_CUTOFF}"]
            if result.best_ndcg is None or report.validation_ndcg > result.best_ndcg:
                result.best_ndcg = report.validation_ndcg
                result.best_epoch = epoch
                best_state = copy.deepcopy(model.state_dict())
                stale = 0
            else:
                stale += 1
        else:
            result.best_epoch = epoch

        result.reports.append(report)
        logger.debug(
            "epoch %d: rec %.5f diff %.5f total %.5f (%.2fs)", epoch, rec, diff, report.total_loss, report.wall_time
        )
        if callback is not None:
            callback(report)
        if validation and stale >= config.patience:
            logger.info("Early stopping after epoch %d; best epoch %d.", epoch, result.best_epoch)
            break

    if best_state is not None:
        model.load_state_dict(best_state)
    model.eval()
    return result


__all__ = ["LossReport", "TrainResult", "iterate_batches", "train"]
