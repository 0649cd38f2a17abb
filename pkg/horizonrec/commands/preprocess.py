"""``preprocess``: raw interaction files -> dataset directory."""

from __future__ import annotations

import argparse
import logging

from horizonrec.helpers.data_utils import Domain, build_dataset, load_interactions
from horizonrec.helpers.run_utils import RunManifest, guard_output, manifest_path

logger = logging.getLogger(__name__)


def run_preprocess_command(args: argparse.Namespace) -> int:
    out = guard_output(args.out, args.overwrite)
    manifest = RunManifest(
        command="preprocess",
        config={"min_interactions": args.min_interactions, "max_len": args.max_len, "header": args.header},
    )
    source = load_interactions(args.source, Domain.SOURCE, header=args.header)
    target = load_interactions(args.target, Domain.TARGET, header=args.header)
    dataset = build_dataset(source, target, args.min_interactions, args.max_len)
    if not dataset.splits:
        logger.warning("No user passed the filters; the dataset is empty.")
    dataset.save(out)
    manifest.dataset_hash = dataset.content_hash()
    manifest.add_artifact("dataset", out)
    manifest.write(manifest_path(out))
    print(f"{len(dataset.splits)} users, {dataset.vocab.num_source} source items, "
          f"{dataset.vocab.num_target} target items -> {out}")
    return 0
