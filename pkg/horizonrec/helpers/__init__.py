"""Helper modules for horizonrec.

This package holds the domain logic: data preparation, the sequence
encoders, segment retrieval, the diffusion components, the joint model,
training, evaluation and the run/checkpoint plumbing used by the commands.
"""

from .data_utils import (
    CrossDomainDataset,
    Domain,
    DomainSequence,
    InteractionRecord,
    JointVocabulary,
    MixedSequence,
    SplitSpec,
    build_dataset,
    build_mixed_sequence,
    filter_users,
    load_interactions,
    split_leave_one_out,
)
from .synthetic_utils import generate_synthetic
from .encoder_utils import (
    ItemEmbeddingTable,
    SequenceEncoder,
    UserStateBundle,
    encode_sequence,
    fuse_base,
    pretrain_domain,
    score_items,
)
from .retrieval_utils import (
    CandidateSegment,
    RetrievalDatabase,
    RetrievedNoise,
    build_database,
    embed_candidate,
    extract_candidates,
    lowpass_weight,
    retrieve_topk,
    sample_retrieved_noise,
)
from .diffusion_utils import (
    ConditionalDenoiser,
    DiffusionSchedule,
    NoisedState,
    denoise_step,
    diffusion_loss,
    forward_noise,
    make_schedule,
    reverse_chain,
)
from .model_utils import AblationVariant, HorizonRec, ModelWiring, TrainConfig, apply_ablation, fuse_final, rec_loss
from .training_utils import LossReport, TrainResult, train
from .eval_utils import (
    MetricReport,
    RankingResult,
    evaluate,
    export_alignment,
    hr_at_k,
    ndcg_at_k,
    rank_target,
)
from .benchmark_utils import BenchmarkConfig, BenchmarkReport, run_benchmark_suite

__all__ = [
    "CrossDomainDataset",
    "Domain",
    "DomainSequence",
    "InteractionRecord",
    "JointVocabulary",
    "MixedSequence",
    "SplitSpec",
    "build_dataset",
    "build_mixed_sequence",
    "filter_users",
    "load_interactions",
    "split_leave_one_out",
    "generate_synthetic",
    "ItemEmbeddingTable",
    "SequenceEncoder",
    "UserStateBundle",
    "encode_sequence",
    "fuse_base",
    "pretrain_domain",
    "score_items",
    "CandidateSegment",
    "RetrievalDatabase",
    "RetrievedNoise",
    "build_database",
    "embed_candidate",
    "extract_candidates",
    "lowpass_weight",
    "retrieve_topk",
    "sample_retrieved_noise",
    "ConditionalDenoiser",
    "DiffusionSchedule",
    "NoisedState",
    "denoise_step",
    "diffusion_loss",
    "forward_noise",
    "make_schedule",
    "reverse_chain",
    "AblationVariant",
    "HorizonRec",
    "ModelWiring",
    "TrainConfig",
    "apply_ablation",
    "fuse_final",
    "rec_loss",
    "LossReport",
    "TrainResult",
    "train",
    "MetricReport",
    "RankingResult",
    "evaluate",
    "export_alignment",
    "hr_at_k",
    "ndcg_at_k",
    "rank_target",
    "BenchmarkConfig",
    "BenchmarkReport",
    "run_benchmark_suite",
]
