"""Discriminative transformation learning for fuzzy sparse subspace clustering."""

from .data import (SyntheticSpec, generate_synthetic, normalize_columns,
                   read_labels, read_matrix, stack_trajectories, write_labels,
                   write_matrix)
from .dtl import (DtlParams, discriminative_gap, init_features,
                  nuclear_subgradient, refine_features, run_dtl,
                  update_operator)
from .fssc import (FsscParams, build_laplacian, representation_weights,
                   run_fssc, update_fuzzy_labels, update_representations)
from .metrics import angle_matrix, clustering_error, smallest_principal_angle
from .pipeline import (PipelineConfig, assign_labels, init_operator,
                       run_dtl_fssc, run_ssc, spectral_cluster, ssc_baseline)
from .solvers import (ConvergenceWarning, SolverOptions, WeightedLassoProblem,
                      logdet_barrier_shrink, positive_quadratic_log_root,
                      project_simplex, prox_nuclear, soft_threshold,
                      solve_weighted_lasso)

__version__ = "0.1.0"

__all__ = [
    "ConvergenceWarning", "DtlParams", "FsscParams", "PipelineConfig",
    "SolverOptions", "SyntheticSpec", "WeightedLassoProblem", "angle_matrix",
    "assign_labels", "build_laplacian", "clustering_error",
    "discriminative_gap", "generate_synthetic", "init_features",
    "init_operator", "logdet_barrier_shrink", "normalize_columns",
    "nuclear_subgradient", "positive_quadratic_log_root", "project_simplex",
    "prox_nuclear", "read_labels", "read_matrix", "refine_features",
    "representation_weights", "run_dtl", "run_dtl_fssc", "run_fssc",
    "run_ssc", "smallest_principal_angle", "soft_threshold",
    "solve_weighted_lasso", "spectral_cluster", "ssc_baseline",
    "stack_trajectories", "update_fuzzy_labels", "update_operator",
    "update_representations", "write_labels", "write_matrix",
]
