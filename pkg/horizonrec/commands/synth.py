"""``synth``: generate a planted synthetic dataset directory."""

from __future__ import annotations

import argparse
import logging

import pandas as pd

from horizonrec.helpers.data_utils import build_dataset
from horizonrec.helpers.run_utils import RunManifest, guard_output, manifest_path, resolve_seed
from horizonrec.helpers.synthetic_utils import generate_synthetic

logger = logging.getLogger(__name__)


def run_synth_command(args: argparse.Namespace) -> int:
    out = guard_output(args.out, args.overwrite)
    seed = resolve_seed(args.seed)
    temperature = float("inf") if args.temperature.lower() in ("inf", "uniform") else float(args.temperature)
    manifest = RunManifest(
        command="synth",
        config={
            "users": args.users,
            "items": args.items,
            "seq_len": [args.min_len, args.max_seq_len],
            "latent_dim": args.latent_dim,
            "temperature": temperature,
        },
        seed=seed,
    )
    data = generate_synthetic(
        n_users=args.users,
        n_items_per_domain=args.items,
        seq_len_range=(args.min_len, args.max_seq_len),
        latent_dim=args.latent_dim,
        noise_level=temperature,
        seed=seed,
    )
    dataset = build_dataset(data.source_records, data.target_records, max_len=args.max_len)
    dataset.save(out)
    # Raw logs in the preprocess input format, so the pipeline can be replayed from scratch.
    for name, records in (("raw_source.tsv", data.source_records), ("raw_target.tsv", data.target_records)):
        frame = pd.DataFrame([(r.user_id, r.item_id, r.timestamp) for r in records])
        frame.to_csv(out / name, sep="\t", header=False, index=False)
    manifest.dataset_hash = dataset.content_hash()
    manifest.add_artifact("dataset", out)
    manifest.write(manifest_path(out))
    print(f"synthetic dataset with {len(dataset.splits)} users -> {out}")
    return 0
