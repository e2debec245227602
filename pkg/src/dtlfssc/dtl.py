"""Discriminative transformation learning.

Given self-representations ``Z`` and fuzzy labels ``Q``, compute latent
features ``F`` around the projections ``A X`` (convex low-rank start, then a
difference-of-convex subgradient refinement) and update the linear operator
``A`` by ADMM with a log-det barrier on ``A A'``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .solvers import (ConvergenceWarning, SolverOptions, logdet_barrier_shrink,
                      positive_quadratic_log_root, prox_nuclear)


@dataclass(frozen=True)
class DtlParams:
    """Weights and loop counts for the transform-learning stage.

    ``lam`` weights the feature fidelity ``||AX - F||^2``, ``tau1`` the
    barrier ``-log det(AA')``. ``mu`` is the subgradient step (defaults to
    ``0.1 / lam``), ``dc_steps`` caps the refinement steps.
    """

    lam: float = 0.05
    tau1: float = 1.0
    mu: float | None = None
    t_dtl: int = 1
    dc_steps: int = 10
    features: SolverOptions = field(
        default_factory=lambda: SolverOptions(max_iters=200, tol=1e-6))
    admm: SolverOptions = field(
        default_factory=lambda: SolverOptions(max_iters=100, tol=1e-6))

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be > 0")
        if not self.tau1 > 0:
            raise ValueError("tau1 must be > 0")
        if self.mu is not None and not self.mu > 0:
            raise ValueError("mu must be > 0")
        if int(self.t_dtl) < 0 or int(self.dc_steps) < 0:
            raise ValueError("t_dtl and dc_steps must be >= 0")

    @property
    def step(self) -> float:
        return 0.1 / self.lam if self.mu is None else self.mu


class RefineTrace(NamedTuple):
    objective: list
    feature_nuclear: list
    step_sizes: list


def nuclear_norm(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False).sum())


def _check_pair(F, Q):
    F = np.asarray(F, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if F.ndim != 2 or Q.ndim != 2 or F.shape[1] != Q.shape[0]:
        raise ValueError(
            f"F has {F.shape[-1]} columns but Q has {Q.shape[0]} rows")
    return F, Q


def discriminative_gap(F, Q) -> float:
    """``sum_k ||F diag(Q_k)||_* - ||F||_*``, nonnegative for simplex rows."""
    F, Q = _check_pair(F, Q)
    return sum(nuclear_norm(F * Q[:, k]) for k in range(Q.shape[1])) - nuclear_norm(F)


def feature_objective(F, X_proj, Q, lam) -> float:
    """Convex part ``(lam/2)||AX - F||^2 + sum_k ||F diag(Q_k)||_*``."""
    R = np.asarray(X_proj) - F
    return float(0.5 * lam * np.sum(R * R)
                 + sum(nuclear_norm(F * Q[:, k]) for k in range(Q.shape[1])))


def dc_objective(F, X_proj, Q, lam) -> float:
    return feature_objective(F, X_proj, Q, lam) - nuclear_norm(F)


def init_features(X_proj, Q, lam, opts: SolverOptions | None = None):
    """Convex low-rank start for the features.

    Minimizes ``(lam/2)||AX - F||^2 + sum_k ||F diag(Q_k)||_*`` by ADMM with
    one splitting variable ``G_k = F diag(Q_k)`` per cluster. The F-step is
    column-wise closed form; each G-step is a singular value threshold.
    """
    Y, Q = _check_pair(X_proj, Q)
    opts = opts or SolverOptions(max_iters=200, tol=1e-6)
    K = Q.shape[1]
    rho = lam if opts.rho is None else float(opts.rho)
    F = Y.copy()
    G = [F * Q[:, k] for k in range(K)]
    U = [np.zeros_like(F) for _ in range(K)]
    denom = lam + rho * (Q * Q).sum(axis=1)
    scale = max(1.0, float(np.linalg.norm(Y)))
    r = d = np.inf
    for _ in range(int(opts.max_iters)):
        acc = sum((G[k] - U[k]) * Q[:, k] for k in range(K))
        F = (lam * Y + rho * acc) / denom
        r2 = d2 = 0.0
        for k in range(K):
            FD = F * Q[:, k]
            Gk = prox_nuclear(FD + U[k], 1.0 / rho)
            d2 += np.sum(((Gk - G[k]) * Q[:, k]) ** 2)
            U[k] += FD - Gk
            r2 += np.sum((FD - Gk) ** 2)
            G[k] = Gk
        r, d = np.sqrt(r2), rho * np.sqrt(d2)
        if max(r, d) < opts.tol * scale:
            break
    else:
        warnings.warn(
            f"feature ADMM stopped at {opts.max_iters} iterations "
            f"(primal {r:.2e}, dual {d:.2e})", ConvergenceWarning, stacklevel=2)
    return F


def nuclear_subgradient(M, thresh=1e-10):
    """``U V'`` over singular values above ``thresh``: a subgradient of ``||.||_*``."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return np.zeros_like(M)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    keep = s > thresh
    return U[:, keep] @ Vt[keep]


def _dc_direction(F, Y, Q, lam):
    g = lam * (F - Y)
    for k in range(Q.shape[1]):
        g += nuclear_subgradient(F * Q[:, k]) * Q[:, k]
    return g - nuclear_subgradient(F)


def refine_features(F_init, X_proj, Q, lam, mu, dc_steps, *, return_trace=False):
    """Subgradient descent on ``f(F) - ||F||_*`` from ``F_init``.

    A step is kept only if it lowers the objective; otherwise the step size
    is halved (at most 20 times) and, failing that, refinement stops.
    """
    F, Q = _check_pair(F_init, Q)
    Y = np.asarray(X_proj, dtype=float)
    obj = dc_objective(F, Y, Q, lam)
    trace = RefineTrace([obj], [nuclear_norm(F)], [])
    for _ in range(int(dc_steps)):
        g = _dc_direction(F, Y, Q, lam)
        step = mu
        for _ in range(21):
            cand = F - step * g
            cobj = dc_objective(cand, Y, Q, lam)
            if cobj < obj:
                break
            step *= 0.5
        else:
            break
        F, obj = cand, cobj
        trace.objective.append(obj)
        trace.feature_nuclear.append(nuclear_norm(F))
        trace.step_sizes.append(step)
    if return_trace:
        return F, trace
    return F


def residual_matrix(X, Z):
    """``E = XZ - X``."""
    X = np.asarray(X, dtype=float)
    return X @ Z - X


def operator_step(X, F, E, A_hat, Lam, lam, rho, factor=None):
    """Closed-form A-step ``(lam F X' + rho A_hat - Lam)(lam XX' + EE' + rho I)^{-1}``."""
    rhs = lam * F @ X.T + rho * A_hat - Lam
    if factor is None:
        n = X.shape[0]
        factor = cho_factor(lam * X @ X.T + E @ E.T + rho * np.eye(n))
    return cho_solve(factor, rhs.T).T


def dtl_objective(X, F, Z, Q, A, lam, tau1) -> float:
    """Full transform-learning objective for the current variables."""
    AX = A @ X
    R1 = AX - F
    R2 = AX @ Z - AX
    sign, logdet = np.linalg.slogdet(A @ A.T)
    barrier = -tau1 * logdet if sign > 0 else np.inf
    return float(0.5 * lam * np.sum(R1 * R1) + 0.5 * np.sum(R2 * R2)
                 + discriminative_gap(F, Q) + barrier)


def _operator_objective(A, S, C, tau1):
    sign, logdet = np.linalg.slogdet(A @ A.T)
    if sign <= 0:
        return np.inf
    return float(0.5 * np.sum(A * (A @ S)) - np.sum(A * C) - tau1 * logdet)


def _curvature_ok(S):
    w = np.linalg.eigvalsh(S)
    return w[0] > 1e-10 * max(w[-1], 0.0)


def operator_stationary_point(S, C, tau1, A0, max_iters=5000):
    """Stationary point of ``0.5 tr(A S A') - tr(A C') - tau1 log det(AA')`` near ``A0``.

    For wide operators there is no closed form; L-BFGS from ``A0`` stops at
    machine-precision progress. Returns ``None`` when ``S`` is numerically
    singular or the result is not better than ``A0``.
    """
    if not _curvature_ok(S):
        return None
    A0 = np.asarray(A0, dtype=float)
    p, n = A0.shape

    def fun(a):
        A = a.reshape(p, n)
        f = _operator_objective(A, S, C, tau1)
        if not np.isfinite(f):
            return np.inf, np.zeros_like(a)
        G = np.linalg.solve(A @ A.T, A)
        return f, (A @ S - C - 2.0 * tau1 * G).ravel()

    res = minimize(fun, A0.ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": max_iters, "gtol": 1e-12, "ftol": 0.0,
                            "maxcor": 20})
    A = res.x.reshape(p, n)
    if not _operator_objective(A, S, C, tau1) < _operator_objective(A0, S, C, tau1):
        return None
    return A


def square_operator_minimizer(S, C, tau1):
    """Global minimizer of ``0.5 tr(A S A') - tr(A C') - tau1 log det(AA')`` for square ``A``.

    With ``B = A S^{1/2}`` the objective is ``0.5||B - C S^{-1/2}||^2 -
    tau1 log det(BB')`` up to a constant, whose minimizer keeps the singular
    vectors of ``C S^{-1/2}`` and maps each singular value ``s`` to the
    positive root of ``sigma^2 - s sigma - 2 tau1``. Returns ``None`` when
    ``S`` is numerically singular (the objective is then unbounded below).
    """
    if not _curvature_ok(S):
        return None
    w, V = np.linalg.eigh(S)
    S_ih = (V / np.sqrt(w)) @ V.T
    U, s, Vt = np.linalg.svd(C @ S_ih)
    sig = positive_quadratic_log_root(0.5, s, 2.0 * tau1)
    return (U * sig) @ Vt @ S_ih


def update_operator(X, F, Z, A_init, params: DtlParams, *, return_info=False):
    """ADMM on ``(lam/2)||AX-F||^2 + 0.5||AXZ-AX||^2 - tau1 log det(AA')``.

    The A-step is the closed form of :func:`operator_step` (one Cholesky per
    call); the Ahat-step applies :func:`logdet_barrier_shrink` to
    ``(A + Lam/rho)'`` so the barrier acts on ``Ahat Ahat'``. Each call starts
    a fresh multiplier (zero unless the closed-form start below applies).
    Returns ``Ahat``, which always has full row rank.

    The barrier makes the problem nonconvex and small penalties let the
    multiplier run away, so ``rho`` defaults (``params.admm.rho is None``)
    to the largest eigenvalue of ``lam XX' + EE'``, the curvature of the
    quadratic part. The problem is often badly conditioned and ADMM from
    ``A_init`` can stall far from a minimizer, so the iteration starts from
    :func:`square_operator_minimizer` (square operators) or
    :func:`operator_stationary_point` (wide operators) with the matching
    multiplier; ADMM then only certifies that point. Plain ADMM from
    ``A_init`` remains the fallback when ``lam XX' + EE'`` is singular.
    """
    X = np.asarray(X, dtype=float)
    F = np.asarray(F, dtype=float)
    A_hat = np.asarray(A_init, dtype=float).copy()
    p, n = A_hat.shape
    if p > n:
        raise ValueError(f"operator is {p}x{n}; need p <= n")
    if X.shape[0] != n or F.shape != (p, X.shape[1]):
        raise ValueError(
            f"dimension mismatch: A {A_hat.shape}, X {X.shape}, F {F.shape}")
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (X.shape[1], X.shape[1]):
        raise ValueError(f"Z has shape {Z.shape}, expected {(X.shape[1],) * 2}")
    opts = params.admm
    lam, tau1 = params.lam, params.tau1
    E = residual_matrix(X, Z)
    S = lam * X @ X.T + E @ E.T
    if opts.rho is None:
        rho = max(float(np.linalg.eigvalsh(S)[-1]), 1e-8)
    else:
        rho = float(opts.rho)
    factor = cho_factor(S + rho * np.eye(n))
    C = lam * F @ X.T

    def step(A_hat, Lam):
        A = operator_step(X, F, E, A_hat, Lam, lam, rho, factor)
        A_new = logdet_barrier_shrink((A + Lam / rho).T, rho, tau1).T
        r = float(np.linalg.norm(A - A_new))
        d = float(rho * np.linalg.norm(A_new - A_hat))
        return A_new, Lam + rho * (A - A_new), r, d

    Lam = np.zeros_like(A_hat)
    if p == n:
        A_star = square_operator_minimizer(S, C, tau1)
    else:
        A_star = operator_stationary_point(S, C, tau1, A_hat)
    if A_star is not None:
        # with Lam = C - A S a stationary point is an ADMM fixed point
        A_hat, Lam = A_star, C - A_star @ S
    r = d = np.inf
    it = 0
    converged = False
    for it in range(1, int(opts.max_iters) + 1):
        A_hat, Lam, r, d = step(A_hat, Lam)
        if max(r, d) < opts.tol * max(1.0, float(np.linalg.norm(A_hat))):
            converged = True
            break
    if not converged:
        warnings.warn(
            f"operator ADMM stopped at {opts.max_iters} iterations "
            f"(primal {r:.2e}, dual {d:.2e})", ConvergenceWarning, stacklevel=2)
    if return_info:
        return A_hat, (it, r, d)
    return A_hat


def run_dtl(X, Z, Q, A_init, params: DtlParams):
    """``t_dtl`` rounds of: features from ``A X``, DC refinement, operator update."""
    X = np.asarray(X, dtype=float)
    A = np.asarray(A_init, dtype=float)
    F = A @ X
    for _ in range(int(params.t_dtl)):
        Y = A @ X
        F = init_features(Y, Q, params.lam, params.features)
        F = refine_features(F, Y, Q, params.lam, params.step, params.dc_steps)
        A = update_operator(X, F, Z, A, params)
    return A, F
