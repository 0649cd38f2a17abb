"""Command-line entry point for the horizonrec pipeline.

Usage::

    python -m horizonrec synth --users 200 --seed 7 --out data/synth
    python -m horizonrec pretrain --data data/synth --domain all --epochs 50 --seed 7 --out runs/enc
    python -m horizonrec build-db --data data/synth --ckpt runs/enc/encoder_mixed.pt --out runs/db.pt
    python -m horizonrec train --data data/synth --db runs/db.pt --encoders runs/enc --seed 7 --out runs/model.pt
    python -m horizonrec evaluate --ckpt runs/model.pt --split test --k 5,10,20

Every subcommand returns 0 on success.  Usage errors exit with 2; missing
files, refused overwrites and pipeline errors print one diagnostic line and
exit with 1.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Callable, Dict, Optional, Sequence

from horizonrec.config import (
    DEFAULT_FILTER_C,
    DEFAULT_FILTER_N,
    DEFAULT_MAX_LEN,
    DEFAULT_MIN_INTERACTIONS,
    DEFAULT_WINDOW,
    LOG_LEVEL,
    SYNTH_ITEMS_PER_DOMAIN,
    SYNTH_LATENT_DIM,
    SYNTH_SEQ_LEN_RANGE,
    SYNTH_TEMPERATURE,
    SYNTH_USERS,
)
from horizonrec.commands import (
    run_ablate_command,
    run_benchmark_command,
    run_build_db_command,
    run_evaluate_command,
    run_export_viz_command,
    run_preprocess_command,
    run_pretrain_command,
    run_synth_command,
    run_train_command,
)
from horizonrec.commands.common import add_model_flags
from horizonrec.exceptions import HorizonRecError
from horizonrec.helpers.model_utils import AblationVariant
from horizonrec.helpers.run_utils import apply_thread_limit

logger = logging.getLogger(__name__)

COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "preprocess": run_preprocess_command,
    "synth": run_synth_command,
    "pretrain": run_pretrain_command,
    "build-db": run_build_db_command,
    "train": run_train_command,
    "ablate": run_ablate_command,
    "evaluate": run_evaluate_command,
    "export-viz": run_export_viz_command,
    "benchmark": run_benchmark_command,
}

VARIANTS = [variant.value for variant in AblationVariant]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="horizonrec", description="Cross-domain sequential recommendation pipeline")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    overwrite = argparse.ArgumentParser(add_help=False)
    overwrite.add_argument("--overwrite", action="store_true", help="replace existing outputs")

    p = sub.add_parser("preprocess", parents=[overwrite], help="raw interaction files -> dataset directory")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--header", action="store_true", help="skip one header line per file")
    p.add_argument("--min-interactions", type=int, default=DEFAULT_MIN_INTERACTIONS)
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p.add_argument("--out", required=True)

    p = sub.add_parser("synth", parents=[overwrite], help="generate a synthetic dataset directory")
    p.add_argument("--users", type=int, default=SYNTH_USERS)
    p.add_argument("--items", type=int, default=SYNTH_ITEMS_PER_DOMAIN)
    p.add_argument("--min-len", type=int, default=SYNTH_SEQ_LEN_RANGE[0], help="shortest user history")
    p.add_argument("--max-seq-len", type=int, default=SYNTH_SEQ_LEN_RANGE[1], help="longest user history")
    p.add_argument("--latent-dim", type=int, default=SYNTH_LATENT_DIM)
    p.add_argument("--temperature", default=str(SYNTH_TEMPERATURE), help="softmax temperature or 'inf'")
    p.add_argument("--max-len", type=int, default=DEFAULT_MAX_LEN)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("pretrain", parents=[overwrite], help="pretrain the sequence encoders")
    p.add_argument("--data", required=True)
    p.add_argument("--domain", choices=["source", "target", "mixed", "all"], default="all")
    p.add_argument("--out", required=True, help="checkpoint file, or a directory of encoder_*.pt with --domain all")
    add_model_flags(p)

    p = sub.add_parser("build-db", parents=[overwrite], help="build the segment retrieval database")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", "--encoder", dest="ckpt", required=True, help="pretrained mixed-domain encoder")
    p.add_argument("--c", type=float, default=DEFAULT_FILTER_C)
    p.add_argument("--n", type=float, default=DEFAULT_FILTER_N)
    p.add_argument("--window", type=int, default=DEFAULT_WINDOW)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[overwrite], help="train one model variant")
    p.add_argument("--data", required=True)
    p.add_argument("--db")
    p.add_argument("--encoders", help="directory with pretrained encoder_*.pt")
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--out", required=True)
    add_model_flags(p)

    p = sub.add_parser("ablate", parents=[overwrite], help="train and evaluate a grid of variants")
    p.add_argument("--data", required=True)
    p.add_argument("--db")
    p.add_argument("--encoders")
    p.add_argument("--variant", dest="variants", action="append", choices=VARIANTS)
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument(
        "--sweep",
        help="NAME=v1,v2 over fusion_weight, diffusion_weight, top_k or steps (bare NAME uses the default grid)",
    )
    p.add_argument("--split", choices=["validation", "test"], default="test")
    p.add_argument("--out", required=True)
    add_model_flags(p)

    p = sub.add_parser("evaluate", parents=[overwrite], help="rank held-out items with a trained checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", help="dataset directory (defaults to the one recorded in the checkpoint)")
    p.add_argument("--split", choices=["validation", "test"], default="test")
    p.add_argument("--k", default="5,10,20")
    p.add_argument("--noise-seeds", type=int, default=1)
    p.add_argument("--mask-seen", action="store_true")
    p.add_argument("--seed", type=int, help="evaluation noise seed")
    p.add_argument("--out", help="metrics directory (default: CKPT.runs/evaluate-<time>)")

    p = sub.add_parser("export-viz", parents=[overwrite], help="export similarity and embedding files")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data")
    p.add_argument("--users", type=int, default=100)
    p.add_argument("--split", choices=["validation", "test"], default="test")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)

    p = sub.add_parser("benchmark", parents=[overwrite], help="time training, inference and retrieval")
    p.add_argument("--data", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--encoders")
    p.add_argument("--step-values", default="16,32")
    p.add_argument("--db-scales", default="1,2")
    p.add_argument("--bench-epochs", type=int, default=2)
    p.add_argument("--out", help="report directory (default: DB.runs/benchmark-<time>)")
    add_model_flags(p)
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else LOG_LEVEL,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        apply_thread_limit()
        return COMMANDS[args.command](args)
    except (FileNotFoundError, FileExistsError, HorizonRecError, ValueError) as exc:
        print(f"horizonrec {args.command}: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
