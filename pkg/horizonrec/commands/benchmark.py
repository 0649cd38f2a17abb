"""``benchmark``: timing report for diffusion steps and database size."""

from __future__ import annotations

import argparse
import logging

from horizonrec.helpers.benchmark_utils import BenchmarkConfig, run_benchmark_suite
from horizonrec.helpers.checkpoint_utils import load_encoder_dir
from horizonrec.helpers.data_utils import CrossDomainDataset
from horizonrec.helpers.retrieval_utils import RetrievalDatabase
from horizonrec.helpers.run_utils import RunManifest, default_run_dir, guard_output, manifest_path

from .common import build_train_config, parse_int_list

logger = logging.getLogger(__name__)


def run_benchmark_command(args: argparse.Namespace) -> int:
    out = guard_output(args.out or default_run_dir(args.db, "benchmark"), args.overwrite)
    config = build_train_config(args)
    dataset = CrossDomainDataset.load(args.data, max_len=config.max_len)
    database = RetrievalDatabase.load(args.db)
    encoders = load_encoder_dir(args.encoders) if args.encoders else None
    bench = BenchmarkConfig(
        step_values=parse_int_list(args.step_values),
        database_scales=parse_int_list(args.db_scales),
        epochs=args.bench_epochs,
    )
    report = run_benchmark_suite(dataset, encoders, database, config, bench)
    print(report.to_text())
    kv_path, csv_path = report.write(out)
    manifest = RunManifest(
        command="benchmark", config=config.to_dict(), dataset_hash=dataset.content_hash(), seed=config.seed
    )
    manifest.add_artifact("metrics", kv_path)
    manifest.add_artifact("timings", csv_path)
    manifest.write(manifest_path(out))
    print(f"report -> {out}")
    return 0
