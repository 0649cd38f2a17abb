"""``build-db``: embed every mixed training segment with the pretrained mixed table."""

from __future__ import annotations

import argparse
import logging

from horizonrec.exceptions import CheckpointError
from horizonrec.helpers.checkpoint_utils import load_encoder
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.retrieval_utils import build_database
from horizonrec.helpers.run_utils import RunManifest, guard_output, manifest_path

logger = logging.getLogger(__name__)


def run_build_db_command(args: argparse.Namespace) -> int:
    out = guard_output(args.out, args.overwrite)
    encoder = load_encoder(args.ckpt)
    dataset = CrossDomainDataset.load(args.data, max_len=encoder.config.max_len)
    if encoder.config.num_items != dataset.vocab.num_joint:
        raise CheckpointError(
            f"mixed encoder covers {encoder.config.num_items} items but the joint vocabulary has {dataset.vocab.num_joint}"
        )
    sequences = list(zip(dataset.users, dataset.mixed_training_sequences()))
    database = build_database(sequences, encoder.table(), dataset.vocab, args.c, args.n, args.window)
    database.save(out)
    manifest = RunManifest(
        command="build-db",
        config={"c": args.c, "n": args.n, "window": args.window, "encoder": str(args.ckpt)},
        dataset_hash=dataset.content_hash(),
    )
    manifest.add_artifact("database", out)
    manifest.write(manifest_path(out))
    print(f"{len(database)} segments -> {out}")
    return 0
