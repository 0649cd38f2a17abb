"""``export-viz``: similarity and embedding dumps for downstream plotting."""

from __future__ import annotations

import argparse
import logging

import pandas as pd

from horizonrec.config import EVAL_SEED
from horizonrec.helpers.checkpoint_utils import load_model
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.eval_utils import collect_alignment, export_alignment, mean_alignment_gain
from horizonrec.helpers.run_utils import RunManifest, guard_output, manifest_path

logger = logging.getLogger(__name__)


def run_export_viz_command(args: argparse.Namespace) -> int:
    out = guard_output(args.out, args.overwrite)
    dataset = CrossDomainDataset.load(args.data) if args.data else None
    checkpoint = load_model(args.ckpt, dataset)
    if dataset is None:
        dataset = CrossDomainDataset.load(checkpoint.dataset_dir, max_len=checkpoint.model.config.max_len)
    seed = args.seed if args.seed is not None else EVAL_SEED
    batch = collect_alignment(checkpoint.model, dataset, checkpoint.database, args.users, args.split, seed)
    similarity_path, embeddings_path = export_alignment(batch, out)
    manifest = RunManifest(
        command="export-viz",
        config=checkpoint.model.config.to_dict(),
        dataset_hash=dataset.content_hash(),
        seed=seed,
    )
    manifest.add_artifact("similarity", similarity_path)
    manifest.add_artifact("embeddings", embeddings_path)
    manifest.write(manifest_path(out))
    gain = mean_alignment_gain(pd.read_csv(similarity_path))
    print(f"exported {len(batch.users)} users -> {out} (source/target cosine change after diffusion {gain:+.4f})")
    return 0
