"""Federated recommendation with client-side consensus enhancement.

A numpy-backed simulator for one-user-per-client federated training of
implicit-feedback recommenders. Clients keep a private user embedding and a
personal item table, share a global item table through server averaging,
and learn a transfer matrix that reshapes the shared table to fit their own
distribution. Auxiliary losses keep the two item views rank-consistent and
feature-orthogonal. A diagnostics module measures how far the averaged
table drifts from any single client's optimum.
"""

from .checkpoint import load_client_state, save_client_state
from .config import ExperimentConfig, load_config, resolve_config
from .datasets import (
    InteractionDataset,
    NegativeSampler,
    RawInteraction,
    build_eval_candidates,
    leave_one_out_split,
    load_dataset,
    sample_training_batch,
)
from .degradation import (
    DegradationReport,
    QuadraticClient,
    bound_sweep,
    empirical_heterogeneity_probe,
    toy_example_report,
    verify_bound,
)
from .evaluation import (
    RoundMetrics,
    export_correlation_matrix,
    hr_ndcg_at_k,
    metrics_csv_lines,
    rank_candidates,
    rbo_truncated,
    view_consistency_rbo,
)
from .federation import (
    HyperParams,
    ServerState,
    TrainingResult,
    Upload,
    UploadChannel,
    VariantConfig,
    aggregate_consensus,
    aggregate_theta,
    enhancement_baseline,
    fedmf_baseline,
    local_update,
    run_training,
    select_clients,
)
from .losses import (
    LossBreakdown,
    consistency_loss,
    orthogonality_loss,
    rec_loss,
    similarity_consistency_diagnostic,
    top_one_distribution,
    total_loss,
)
from .model import (
    ClientState,
    ForwardTrace,
    TransferNet,
    compute_prototypes,
    enhance_consensus,
    forward_pass,
    fuse,
    generate_transfer_matrix,
    init_client,
    predict,
)
from .numerics import GradCheckReport, cosine_similarity, grad_check, matmul, softmax
from .toy import generate_toy_dataset, write_toy_dataset_csv

__version__ = "0.1.0"

__all__ = [
    "ClientState",
    "DegradationReport",
    "ExperimentConfig",
    "ForwardTrace",
    "GradCheckReport",
    "HyperParams",
    "InteractionDataset",
    "LossBreakdown",
    "NegativeSampler",
    "QuadraticClient",
    "RawInteraction",
    "RoundMetrics",
    "ServerState",
    "TrainingResult",
    "TransferNet",
    "Upload",
    "UploadChannel",
    "VariantConfig",
    "aggregate_consensus",
    "aggregate_theta",
    "bound_sweep",
    "build_eval_candidates",
    "compute_prototypes",
    "consistency_loss",
    "cosine_similarity",
    "empirical_heterogeneity_probe",
    "enhance_consensus",
    "enhancement_baseline",
    "export_correlation_matrix",
    "fedmf_baseline",
    "forward_pass",
    "fuse",
    "generate_toy_dataset",
    "generate_transfer_matrix",
    "grad_check",
    "hr_ndcg_at_k",
    "init_client",
    "leave_one_out_split",
    "load_client_state",
    "load_config",
    "load_dataset",
    "local_update",
    "matmul",
    "metrics_csv_lines",
    "orthogonality_loss",
    "predict",
    "rank_candidates",
    "rbo_truncated",
    "rec_loss",
    "resolve_config",
    "run_training",
    "sample_training_batch",
    "save_client_state",
    "select_clients",
    "similarity_consistency_diagnostic",
    "softmax",
    "top_one_distribution",
    "total_loss",
    "toy_example_report",
    "verify_bound",
    "view_consistency_rbo",
    "write_toy_dataset_csv",
]
