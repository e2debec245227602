"""End-to-end DTL-FSSC, the SSC baseline and spectral clustering."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import normalize_columns
from .dtl import DtlParams, discriminative_gap, dtl_objective, run_dtl
from .fssc import (FsscParams, build_laplacian, fssc_objective, one_hot,
                   run_fssc, spectral_cluster, uniform_labels,
                   update_representations)
from .metrics import angle_matrix, clustering_error
from .solvers import SolverOptions


class PipelineError(RuntimeError):
    """A sub-step failed; the message names the outer iteration and stage."""


@dataclass(frozen=True)
class PipelineConfig:
    K: int
    p: int | None = None
    t_max: int = 10
    seed: int = 0
    membership_mode: str = "fuzzy"
    normalize_features: bool = True
    fssc: FsscParams = field(default_factory=FsscParams)
    dtl: DtlParams = field(default_factory=DtlParams)
    ssc_alpha: float | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.p is not None and self.p < 1:
            raise ValueError("p must be >= 1")
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if self.membership_mode not in ("fuzzy", "binary"):
            raise ValueError("membership_mode must be 'fuzzy' or 'binary'")


@dataclass
class IterationRecord:
    iteration: int
    fssc_objective: float
    dtl_objective: float
    disc_gap: float
    error_pct: float | None = None
    angles: np.ndarray | None = None


@dataclass
class RunHistory:
    records: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    Q: list = field(default_factory=list)
    A: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)


@dataclass
class RunResult:
    labels: np.ndarray
    Q: np.ndarray
    Z: np.ndarray
    A: np.ndarray
    history: RunHistory


def init_operator(p, n, seed):
    """Standard Gaussian ``p x n`` matrix scaled to unit spectral norm."""
    if p > n:
        raise ValueError(f"feature dimension p={p} exceeds input dimension n={n}")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((p, n))
    return A / np.linalg.norm(A, 2)


def assign_labels(Q):
    """Row-wise argmax; ties go to the smallest index."""
    return np.argmax(np.asarray(Q), axis=1).astype(np.int64)


def ssc_baseline(X_feat, K, alpha, opts: SolverOptions | None = None, seed=0):
    """Plain SSC: uniform-weight lasso self-representation + spectral clustering."""
    X = np.asarray(X_feat, dtype=float)
    N = X.shape[1]
    if N <= K:
        raise ValueError(f"need more samples than clusters (N={N}, K={K})")
    params = FsscParams(alpha=alpha, beta=0.0, tau=1.0,
                        lasso=opts or SolverOptions())
    Z = update_representations(X, uniform_labels(N, K), params)
    if not np.any(Z):
        warnings.warn("SSC coefficients are all zero; alpha is above the "
                      "zero-solution threshold", RuntimeWarning, stacklevel=2)
    labels = spectral_cluster(build_laplacian(Z).affinity, K, seed)
    return Z, labels


def _features(A, X, normalize):
    Xt = A @ X
    return normalize_columns(Xt) if normalize else Xt


def run_dtl_fssc(X, config: PipelineConfig, truth=None, record_angles=False):
    """Alternate FSSC and DTL for ``config.t_max`` outer iterations.

    ``A`` starts as a seeded Gaussian operator with unit spectral norm and
    ``Z`` as the SSC solution in that random feature domain. Each outer
    iteration re-projects the data, runs FSSC (or, in binary mode, one
    Z-update followed by one-hot spectral labels), then DTL. Final labels
    are the row-wise argmax of ``Q``.
    """
    X = np.asarray(X, dtype=float)
    if not np.all(np.isfinite(X)):
        raise ValueError("X has non-finite entries")
    n, N = X.shape
    K = config.K
    if N <= K:
        raise ValueError(f"need more samples than clusters (N={N}, K={K})")
    p = n if config.p is None else config.p
    if p > n:
        raise ValueError(f"feature dimension p={p} exceeds input dimension n={n}")
    fp, dp = config.fssc, config.dtl
    alpha0 = fp.alpha if config.ssc_alpha is None else config.ssc_alpha
    seed = config.seed

    A = init_operator(p, n, seed)
    Xt = _features(A, X, config.normalize_features)
    Z, _ = ssc_baseline(Xt, K, alpha0, fp.lasso, seed)
    Q = uniform_labels(N, K)
    history = RunHistory()

    for t in range(1, config.t_max + 1):
        stage = "projection"
        try:
            Xt = _features(A, X, config.normalize_features)
            if config.membership_mode == "fuzzy":
                stage = "fssc"
                Z, Q = run_fssc(Xt, K, fp, Z, Q)
            else:
                stage = "ssc-binary"
                Z = update_representations(Xt, Q, fp, Z0=Z)
                Q = one_hot(spectral_cluster(build_laplacian(Z).affinity, K, seed), K)
            stage = "dtl"
            A, F = run_dtl(X, Z, Q, A, dp)
        except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
            raise PipelineError(f"iteration {t}, stage {stage}: {exc}") from exc
        labels = assign_labels(Q)
        rec = IterationRecord(
            iteration=t,
            fssc_objective=fssc_objective(Xt, Z, Q, fp),
            dtl_objective=dtl_objective(X, F, Z, Q, A, dp.lam, dp.tau1),
            disc_gap=discriminative_gap(F, Q),
        )
        if truth is not None:
            rec.error_pct = clustering_error(labels, truth)
            if record_angles:
                rec.angles = angle_matrix(A, X, truth)
        history.records.append(rec)
        history.labels.append(labels)
        history.Q.append(Q.copy())
        history.A.append(A.copy())

    return RunResult(assign_labels(Q), Q, Z, A, history)


def run_ssc(X, config: PipelineConfig):
    """SSC baseline in the same seeded random feature domain DTL-FSSC starts from."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    p = n if config.p is None else config.p
    A = init_operator(p, n, config.seed)
    alpha = config.fssc.alpha if config.ssc_alpha is None else config.ssc_alpha
    Z, labels = ssc_baseline(_features(A, X, config.normalize_features),
                             config.K, alpha, config.fssc.lasso, config.seed)
    return labels, Z, A
