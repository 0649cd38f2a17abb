"""``train``: joint training of one variant, saving the best-validation checkpoint."""

from __future__ import annotations

import argparse
import dataclasses
import logging

from horizonrec.helpers.checkpoint_utils import load_encoder_dir, save_model
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.retrieval_utils import RetrievalDatabase
from horizonrec.helpers.run_utils import RunManifest, guard_output, manifest_path
from horizonrec.helpers.training_utils import train

from .common import build_train_config, require_database

logger = logging.getLogger(__name__)


def run_train_command(args: argparse.Namespace) -> int:
    out = guard_output(args.out, args.overwrite)
    config = build_train_config(args)
    require_database(config, args.db)
    dataset = CrossDomainDataset.load(args.data, max_len=config.max_len)
    database = RetrievalDatabase.load(args.db) if args.db else None
    encoders = load_encoder_dir(args.encoders) if args.encoders else None
    manifest = RunManifest(
        command="train", config=config.to_dict(), dataset_hash=dataset.content_hash(), seed=config.seed
    )
    result = train(dataset, encoders, database, config, show_progress=True)
    reports = [dataclasses.asdict(report) for report in result.reports]
    path = save_model(result.model, out, database, args.data, dataset.content_hash(), reports)
    manifest.add_artifact("checkpoint", path)
    manifest.write(manifest_path(out))
    print(f"trained {len(result.reports)} epochs, best epoch {result.best_epoch} "
          f"(validation NDCG@10 {result.best_ndcg if result.best_ndcg is not None else float('nan'):.4f}) -> {path}")
    return 0
