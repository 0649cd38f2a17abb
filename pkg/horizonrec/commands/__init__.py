"""One module per pipeline stage, each exposing ``run_*_command(args) -> int``."""

from .preprocess import run_preprocess_command
from .synth import run_synth_command
from .pretrain import run_pretrain_command
from .build_db import run_build_db_command
from .train import run_train_command
from .ablate import run_ablate_command
from .evaluate import run_evaluate_command
from .export_viz import run_export_viz_command
from .benchmark import run_benchmark_command

__all__ = [
    "run_preprocess_command",
    "run_synth_command",
    "run_pretrain_command",
    "run_build_db_command",
    "run_train_command",
    "run_ablate_command",
    "run_evaluate_command",
    "run_export_viz_command",
    "run_benchmark_command",
]
