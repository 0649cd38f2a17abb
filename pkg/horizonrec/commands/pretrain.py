"""``pretrain``: next-item pretraining of the source, target and mixed encoders."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from horizonrec.helpers.checkpoint_utils import save_encoder
from horizonrec.helpers.data_utils import CrossDomainDataset, Domain
from horizonrec.helpers.encoder_utils import next_item_accuracy, pretrain_domain
from horizonrec.helpers.run_utils import RunManifest, guard_output, manifest_path

from .common import build_train_config

logger = logging.getLogger(__name__)

DOMAINS = ("source", "target", "mixed")


def run_pretrain_command(args: argparse.Namespace) -> int:
    """Pretrain one encoder into the checkpoint ``--out``, or all three into the directory ``--out``."""
    out = guard_output(args.out, args.overwrite)
    config = build_train_config(args)
    dataset = CrossDomainDataset.load(args.data, max_len=config.max_len)
    single = args.domain != "all"
    domains = (args.domain,) if single else DOMAINS
    manifest = RunManifest(
        command="pretrain", config=config.to_dict(), dataset_hash=dataset.content_hash(), seed=config.seed
    )
    if not single:
        out.mkdir(parents=True, exist_ok=True)
    for name in domains:
        if name == "mixed":
            sequences, num_items = dataset.mixed_training_sequences(), dataset.vocab.num_joint
        else:
            domain = Domain(name)
            sequences = dataset.domain_training_sequences(domain)
            num_items = dataset.vocab.num_source if domain is Domain.SOURCE else dataset.vocab.num_target
        result = pretrain_domain(
            sequences,
            config.encoder_config(num_items),
            name,
            epochs=config.epochs,
            lr=config.learning_rate,
            batch_size=config.batch_size,
            seed=config.seed,
            show_progress=True,
        )
        target = out if single else Path(out) / f"encoder_{name}.pt"
        path = save_encoder(result.encoder, target, result.losses)
        manifest.add_artifact(f"encoder_{name}", path)
        accuracy = next_item_accuracy(result.encoder, sequences)
        print(f"{name}: final loss {result.losses[-1]:.4f}, next-item accuracy {accuracy:.3f} -> {path}")
    manifest.write(out.with_name(out.name + ".manifest.json") if single else manifest_path(out))
    return 0
