"""``ablate``: train and evaluate a grid of variants, settings and seeds."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from horizonrec.helpers.ablation_utils import parse_sweep, run_grid, summarize
from horizonrec.helpers.checkpoint_utils import load_encoder_dir
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.model_utils import AblationVariant, TrainConfig
from horizonrec.helpers.retrieval_utils import RetrievalDatabase
from horizonrec.helpers.run_utils import RunManifest, guard_output, manifest_path

from .common import build_train_config, parse_int_list, require_database

logger = logging.getLogger(__name__)


def run_ablate_command(args: argparse.Namespace) -> int:
    out = Path(guard_output(args.out, args.overwrite))
    config = build_train_config(args)
    variants = args.variants or [variant.value for variant in AblationVariant]
    for variant in variants:
        require_database(TrainConfig.from_mapping({"variant": variant}, base=config), args.db)
    seeds = parse_int_list(args.seeds) if args.seeds else [config.seed]
    sweep = parse_sweep(args.sweep) if args.sweep else None
    dataset = CrossDomainDataset.load(args.data, max_len=config.max_len)
    database = RetrievalDatabase.load(args.db) if args.db else None
    encoders = load_encoder_dir(args.encoders) if args.encoders else None
    manifest = RunManifest(
        command="ablate", config=config.to_dict(), dataset_hash=dataset.content_hash(), seed=config.seed
    )
    results = run_grid(dataset, encoders, database, config, variants, seeds, sweep, split=args.split)
    summary = summarize(results)
    out.mkdir(parents=True, exist_ok=True)
    results.to_csv(out / "runs.csv", index=False)
    summary.to_csv(out / "summary.csv", index=False)
    manifest.add_artifact("runs", out / "runs.csv")
    manifest.add_artifact("summary", out / "summary.csv")
    manifest.write(manifest_path(out))
    print(summary.to_string(index=False, float_format="%.4f"))
    return 0
