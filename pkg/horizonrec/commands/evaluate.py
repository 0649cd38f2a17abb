"""``evaluate``: full-catalogue ranking metrics of a trained checkpoint."""

from __future__ import annotations

import argparse
import logging

from horizonrec.config import EVAL_SEED
from horizonrec.helpers.checkpoint_utils import load_model
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.eval_utils import evaluate
from horizonrec.helpers.run_utils import RunManifest, default_run_dir, guard_output, manifest_path

from .common import parse_int_list

logger = logging.getLogger(__name__)


def run_evaluate_command(args: argparse.Namespace) -> int:
    """Print the metric table and write it, with a manifest, to ``--out`` or a run directory next to the checkpoint."""
    out = guard_output(args.out or default_run_dir(args.ckpt, "evaluate"), args.overwrite)
    dataset = CrossDomainDataset.load(args.data) if args.data else None
    checkpoint = load_model(args.ckpt, dataset)
    model = checkpoint.model
    if dataset is None:
        dataset = CrossDomainDataset.load(checkpoint.dataset_dir, max_len=model.config.max_len)
    seed = args.seed if args.seed is not None else EVAL_SEED
    report = evaluate(
        model,
        dataset,
        checkpoint.database,
        split=args.split,
        ks=parse_int_list(args.k),
        eval_seed=seed,
        noise_seeds=args.noise_seeds,
        mask_seen=args.mask_seen,
    )
    print(report.to_text())
    manifest = RunManifest(
        command="evaluate", config=model.config.to_dict(), dataset_hash=dataset.content_hash(), seed=seed
    )
    manifest.config["checkpoint"] = str(args.ckpt)
    kv_path, csv_path = report.write(out)
    manifest.add_artifact("metrics", kv_path)
    manifest.add_artifact("metrics_table", csv_path)
    manifest.write(manifest_path(out))
    print(f"metrics -> {out}")
    return 0
