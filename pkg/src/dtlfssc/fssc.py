"""Fuzzy sparse subspace clustering in a fixed feature domain.

Alternates a weighted-lasso update of the self-representation matrix ``Z``
(column ``i`` holds the coefficients expressing sample ``i`` through the
others) with an ADMM update of the fuzzy label matrix ``Q`` (rows on the
probability simplex, log-det barrier keeping ``Q`` at full column rank).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from sklearn.cluster import KMeans

from .solvers import (AndersonAccelerator, ConvergenceWarning, SolverOptions,
                      fista_weighted_lasso, positive_quadratic_log_root,
                      project_simplex)


@dataclass(frozen=True)
class FsscParams:
    """Regularization weights and loop counts for FSSC.

    ``alpha`` is the constant part of every lasso weight, ``beta`` scales the
    label-distance part, ``tau`` weights the log-det barrier on ``Q'Q``.
    The Q-subproblem sees the barrier weight ``tau / beta``.
    """

    alpha: float = 0.03
    beta: float = 0.5
    tau: float = 4.0
    t_fssc: int = 3
    lasso: SolverOptions = field(default_factory=SolverOptions)
    admm: SolverOptions = field(
        default_factory=lambda: SolverOptions(max_iters=500, tol=1e-6))

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not self.beta >= 0:
            raise ValueError("beta must be >= 0")
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if int(self.t_fssc) < 0:
            raise ValueError("t_fssc must be >= 0")

    @property
    def tau_tilde(self) -> float:
        if self.beta == 0:
            return np.inf
        return self.tau / self.beta


class GraphLaplacian(NamedTuple):
    laplacian: np.ndarray
    affinity: np.ndarray


class AdmmInfo(NamedTuple):
    iterations: int
    primal_residual: float
    dual_residual: float
    rho: float
    converged: bool


def check_fuzzy_labels(Q, atol=1e-9):
    """Raise ``ValueError`` unless every row of ``Q`` is on the simplex."""
    Q = np.asarray(Q, dtype=float)
    if Q.ndim != 2:
        raise ValueError("Q must be an N x K matrix")
    if np.any(Q < -atol) or np.any(np.abs(Q.sum(axis=1) - 1.0) > atol):
        raise ValueError("rows of Q must lie on the probability simplex")
    return Q


def uniform_labels(N, K):
    return np.full((N, K), 1.0 / K)


def representation_weights(Q, i, alpha, beta):
    """Lasso weights ``beta ||q_i - q_j||^2 + alpha`` for all ``j != i``."""
    Q = np.asarray(Q, dtype=float)
    N = Q.shape[0]
    if not 0 <= i < N:
        raise IndexError(f"sample index {i} out of range for N={N}")
    d = ((Q - Q[i]) ** 2).sum(axis=1)
    return np.delete(beta * d + alpha, i)


def weight_matrix(Q, alpha, beta):
    """All lasso weights at once; column ``i`` serves sample ``i``.

    The diagonal is meaningless (that coefficient is pinned to zero).
    """
    Q = np.asarray(Q, dtype=float)
    sq = (Q * Q).sum(axis=1)
    D = np.maximum(sq[:, None] + sq[None, :] - 2.0 * Q @ Q.T, 0.0)
    return beta * D + alpha


def update_representations(X_feat, Q, params: FsscParams, Z0=None):
    """Solve the N independent weighted-lasso problems for ``Z``.

    Column ``i`` of the result minimizes
    ``0.5||x_i - X_{-i} z||^2 + sum_j w_ij |z_j|`` with the weights from
    :func:`representation_weights`; the diagonal of ``Z`` is exactly zero.
    All columns share one Gram matrix and run as a single batched FISTA.
    """
    X = np.asarray(X_feat, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] < 2:
        raise ValueError(f"need a p x N feature matrix with p>0, N>=2; got {X.shape}")
    N = X.shape[1]
    C = X.T @ X
    W = weight_matrix(Q, params.alpha, params.beta)
    mask = ~np.eye(N, dtype=bool)
    Z, _ = fista_weighted_lasso(C, C, np.where(mask, W, 1.0), params.lasso,
                                target_sqnorm=np.diag(C).copy(), mask=mask,
                                z0=Z0)
    np.fill_diagonal(Z, 0.0)
    return Z


def build_laplacian(Z) -> GraphLaplacian:
    """Affinity ``W = (|Z| + |Z'|)/2`` and Laplacian ``L = diag(W 1) - W``."""
    Z = np.asarray(Z, dtype=float)
    W = 0.5 * (np.abs(Z) + np.abs(Z.T))
    L = np.diag(W.sum(axis=1)) - W
    return GraphLaplacian(L, W)


def label_objective(Q, L, tau_tilde):
    """``Tr(Q' L Q) - tau_tilde * log det(Q'Q)``; ``inf`` if ``Q`` is rank deficient."""
    Q = np.asarray(Q, dtype=float)
    sign, logdet = np.linalg.slogdet(Q.T @ Q)
    if sign <= 0:
        return np.inf
    return float(np.sum(Q * (L @ Q)) - tau_tilde * logdet)


def _gram_logdet_gap_grad(Q, M):
    # gradient of log det(Q'MQ) - log det(Q'Q)
    return (2.0 * (M @ Q) @ np.linalg.inv(Q.T @ M @ Q)
            - 2.0 * Q @ np.linalg.inv(Q.T @ Q))


def _label_grad(Q, L, tt):
    return 2.0 * L @ Q - 2.0 * tt * Q @ np.linalg.inv(Q.T @ Q)


def _face_solve(L, tt, Q, free):
    """Trust-region Newton-CG for the label objective on one face.

    Entries outside ``free`` stay zero and rows keep summing to one. The
    objective is constant along ``Q + 1 v'`` with ``sum(v) = 0``, so
    interior minimizers are not isolated; the trust region copes with that
    and with indefinite Hessians. Returns the face minimizer (possibly with
    negative entries) or ``None`` if the solve fails.
    """
    nfree = free.sum(axis=1, keepdims=True)
    shape = Q.shape

    def proj(D):
        D = np.where(free, D.reshape(shape), 0.0)
        return D - free * (D.sum(axis=1, keepdims=True) / nfree)

    def fun(y):
        return label_objective(Q + proj(y), L, tt)

    def jac(y):
        return proj(_label_grad(Q + proj(y), L, tt)).ravel()

    def hessp(y, v):
        Qy = Q + proj(y)
        D = proj(v)
        Si = np.linalg.inv(Qy.T @ Qy)
        H = 2.0 * L @ D - 2.0 * tt * (D @ Si - Qy @ Si @ (D.T @ Qy + Qy.T @ D) @ Si)
        return proj(H).ravel()

    scale = 1.0 + abs(fun(np.zeros(Q.size)))
    try:
        with np.errstate(all="ignore"):
            res = minimize(fun, np.zeros(Q.size), method="trust-ncg", jac=jac,
                           hessp=hessp, options={"gtol": 1e-10 * scale,
                                                 "maxiter": 100})
    except (np.linalg.LinAlgError, ValueError):
        return None
    if not res.success or not np.isfinite(res.fun):
        return None
    return Q + proj(res.x)


def _polish_labels(L, tt, Q, zero_tol=1e-9, max_rounds=10):
    """Active-set refinement of a simplex-feasible ``Q`` to a KKT point.

    Each round minimizes on the current face. A minimizer outside the
    simplex is cut back to the face boundary and the entries that hit zero
    are fixed; zero entries whose multiplier has the wrong sign are freed.
    Returns ``None`` if no KKT point with a lower objective is found.
    """
    free = Q > zero_tol
    Q = np.where(free, Q, 0.0)
    Q = Q / Q.sum(axis=1, keepdims=True)
    f = label_objective(Q, L, tt)
    if not np.isfinite(f):
        return None
    scale = 1.0 + abs(f)
    for _ in range(max_rounds):
        Qs = _face_solve(L, tt, Q, free)
        if Qs is None:
            return None
        if np.any(Qs < 0.0):
            D = Qs - Q
            neg = D < 0.0
            t = float(np.min(-Q[neg] / D[neg]))
            Qn = np.maximum(Q + t * D, 0.0)
            hit = neg & (Qn <= zero_tol * max(1.0, t))
            Qn[hit] = 0.0
            Qn /= Qn.sum(axis=1, keepdims=True)
            fn = label_objective(Qn, L, tt)
            if not fn <= f:
                return None
            Q, f, free = Qn, fn, free & ~hit
            continue
        Q, f = Qs, label_objective(Qs, L, tt)
        free = free & (Q > 0.0)
        grad = _label_grad(Q, L, tt)
        nfree = free.sum(axis=1, keepdims=True)
        mu = np.where(free, grad, 0.0).sum(axis=1, keepdims=True) / nfree
        bad = ~free & (grad - mu < -1e-9 * scale)
        if not bad.any():
            return Q
        free = free | bad
    return None


def spectral_cluster(W, K, seed=0, n_init=20):
    """Normalized spectral clustering of a symmetric nonnegative affinity.

    Embeds with the ``K`` smallest eigenvectors of ``I - D^{-1/2} W D^{-1/2}``,
    normalizes the rows and runs k-means (k-means++, ``n_init`` restarts).
    """
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    if W.shape != (N, N) or not np.allclose(W, W.T) or np.any(W < 0):
        raise ValueError("W must be a symmetric nonnegative square matrix")
    if K == 1:
        return np.zeros(N, dtype=np.int64)
    deg = W.sum(axis=1)
    dinv = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    Lsym = np.eye(N) - dinv[:, None] * W * dinv[None, :]
    vals, vecs = np.linalg.eigh(Lsym)
    n_comp = int(np.sum(vals < 1e-10))
    if n_comp > K:
        warnings.warn(f"affinity graph has {n_comp} components for K={K}",
                      RuntimeWarning, stacklevel=2)
    V = vecs[:, :K]
    nrm = np.linalg.norm(V, axis=1, keepdims=True)
    V = V / np.where(nrm > 0, nrm, 1.0)
    km = KMeans(n_clusters=K, init="k-means++", n_init=n_init, random_state=seed)
    return km.fit_predict(V).astype(np.int64)


def one_hot(labels, K):
    Q = np.zeros((len(labels), K))
    Q[np.arange(len(labels)), labels] = 1.0
    return Q


def _label_admm(L, rho, tt, Q0, opts):
    N, K = Q0.shape
    M = L + 0.5 * rho * np.eye(N)
    G = np.linalg.cholesky(M).T  # upper: M = G'G
    n = N * K

    def step(state):
        Qh = state[:n].reshape(N, K)
        Lam = state[n:2 * n].reshape(N, K)
        Qp = state[2 * n:].reshape(N, K)
        Lt = Qh - Lam / rho
        try:
            Lt = Lt - (tt / rho) * _gram_logdet_gap_grad(Qp, M)
        except np.linalg.LinAlgError:
            pass
        Y = solve_triangular(G, Lt, trans="T")
        U, s, Vt = np.linalg.svd(Y, full_matrices=False)
        null = s <= 1e-13 * (1.0 + s[0])
        if null.any():
            # the step is not unique on the null space of Y; take the
            # completion closest to the previous iterate
            P = G @ Qp @ Vt[null].T
            U1 = U[:, ~null]
            P -= U1 @ (U1.T @ P)
            Up, _, Vpt = np.linalg.svd(P, full_matrices=False)
            U[:, null] = Up @ Vpt
        sig = positive_quadratic_log_root(1.0, rho * s, 2.0 * tt)
        Q = solve_triangular(G, (U * sig) @ Vt)
        Qh_new = project_simplex(Q + Lam / rho)
        Lam_new = Lam + rho * (Q - Qh_new)
        r = float(np.linalg.norm(Q - Qh_new))
        d = float(rho * np.linalg.norm(Qh_new - Qh))
        return np.concatenate([Qh_new.ravel(), Lam_new.ravel(), Q.ravel()]), r, d

    def polished(Qh):
        # a KKT point with Lam = -grad is an exact ADMM fixed point
        Qs = _polish_labels(L, tt, Qh)
        if Qs is None:
            return None
        xs = np.concatenate([Qs.ravel(), -_label_grad(Qs, L, tt).ravel(), Qs.ravel()])
        gs, r, d = step(xs)
        return (gs, r, d) if max(r, d) < opts.tol else None

    x = np.concatenate([Q0.ravel(), np.zeros(n), Q0.ravel()])
    aa = AndersonAccelerator(memory=5)
    warmup = 20
    r = d = np.inf
    it = 0
    for it in range(1, int(opts.max_iters) + 1):
        if it == 1 or (it > warmup and it % 10 == 0 and max(r, d) < 1.0):
            hit = polished(x[:n].reshape(N, K))
            if hit is not None:
                x, r, d = hit
                break
        gx, r, d = step(x)
        if max(r, d) < opts.tol:
            x = gx
            break
        if it <= warmup:
            x = gx
            continue
        xa = aa.propose(x, gx)
        if xa is gx:
            x = gx
            continue
        ga, _, _ = step(xa)
        if np.linalg.norm(ga - xa) < np.linalg.norm(gx - x):
            x = xa
        else:
            x = gx
            aa.reset()
    converged = max(r, d) < opts.tol
    return x[:n].reshape(N, K).copy(), AdmmInfo(it, r, d, rho, converged)


def update_fuzzy_labels(L, params: FsscParams, K, Q_init=None, *,
                        return_info=False):
    """ADMM for ``min Tr(Q'LQ) - (tau/beta) log det(Q'Q)`` with simplex rows.

    Splits ``Q`` (smooth part) from ``Qhat`` (simplex rows). With
    ``M = L + rho/2 I = G'G`` (one Cholesky per call), the Q-step substitutes
    ``B = G Q``, takes the thin SVD ``U1 S1 V1'`` of ``G^{-T} Lt`` and sets
    ``Q = G^{-1} U1 S* V1'`` where each ``s*`` is the positive root of
    ``s^2 - rho s1 s - 2 tau_tilde log s``. That substitution regularizes
    ``log det(Q'MQ)`` instead of ``log det(Q'Q)``; the difference of the two
    gradients, taken at the previous Q-iterate, is folded into ``Lt`` so the
    fixed points are stationary for the intended objective. The Qhat-step is
    a row-wise simplex projection. Iterations are Anderson-accelerated after
    a short warm-up, with a residual safeguard. Every few iterations the
    current ``Qhat`` is polished by Newton steps on its face of the simplex
    product; a polished KKT point is accepted once an ADMM step from it
    meets the residual tolerance.

    The problem is nonconvex. When ``Q_init`` is rank deficient (the barrier
    is infinite there, as for the uniform matrix) two more runs start from
    hard partitions: the spectral partition of the graph (seeded by
    ``params.admm.seed``) and the balanced round-robin one, which is optimal
    for the barrier alone. The lowest-objective result is kept. A full-rank
    ``Q_init`` is returned unchanged unless ADMM improves on it.

    ``rho`` defaults to ``max(tau_tilde + lambda_max(L), 1)``.

    Returns the simplex-feasible ``Qhat``. Non-convergence within
    ``params.admm.max_iters`` issues a :class:`ConvergenceWarning`.
    """
    if isinstance(L, GraphLaplacian):
        L = L.laplacian
    L = np.asarray(L, dtype=float)
    N = L.shape[0]
    if K < 1 or N < K:
        raise ValueError(f"need 1 <= K <= N, got K={K}, N={N}")
    tt = params.tau_tilde
    if not np.isfinite(tt):
        raise ValueError("beta must be > 0 for the label update")
    opts = params.admm
    Q0 = uniform_labels(N, K) if Q_init is None else check_fuzzy_labels(Q_init).copy()
    if Q0.shape != (N, K):
        raise ValueError(f"Q_init has shape {Q0.shape}, expected {(N, K)}")

    if opts.rho is not None:
        rho = float(opts.rho)
    else:
        lmax = float(np.linalg.eigvalsh(L)[-1]) if N > 1 else 0.0
        rho = max(tt + max(lmax, 0.0), 1.0)

    starts = [Q0]
    if K > 1 and np.linalg.matrix_rank(Q0) < K:
        W = np.maximum(-L, 0.0)
        np.fill_diagonal(W, 0.0)
        W = 0.5 * (W + W.T)
        starts.append(one_hot(spectral_cluster(W, K, opts.seed), K))
        starts.append(one_hot(np.arange(N) % K, K))
    best = None
    for Q_start in starts:
        Qhat, info = _label_admm(L, rho, tt, Q_start, opts)
        obj = label_objective(Qhat, L, tt)
        # later starts must win by more than rounding
        if best is None or obj < best[0] - 1e-9 * (1.0 + abs(best[0])):
            best = (obj, Qhat, info)
    _, Qhat, info = best
    if label_objective(Q0, L, tt) <= best[0]:
        # never hand back something worse than a feasible starting point
        Qhat = Q0
    if not info.converged:
        warnings.warn(
            f"label ADMM stopped at {opts.max_iters} iterations "
            f"(primal {info.primal_residual:.2e}, dual {info.dual_residual:.2e})",
            ConvergenceWarning, stacklevel=2)
    if return_info:
        return Qhat, info
    return Qhat


def fssc_objective(X_feat, Z, Q, params: FsscParams):
    """Full FSSC objective: fit + weighted l1 - tau log det(Q'Q)."""
    X = np.asarray(X_feat, dtype=float)
    R = X - X @ Z
    W = weight_matrix(Q, params.alpha, params.beta)
    np.fill_diagonal(W, 0.0)
    sign, logdet = np.linalg.slogdet(Q.T @ Q)
    barrier = -params.tau * logdet if sign > 0 else np.inf
    return float(0.5 * np.sum(R * R) + np.sum(W * np.abs(Z.T)) + barrier)


def run_fssc(X_feat, K, params: FsscParams, Z_init=None, Q_init=None):
    """``t_fssc`` rounds of (Z-update, Q-update), in that order.

    Returns the final ``(Z, Q)``; with ``t_fssc == 0`` the inputs come back
    unchanged. ``Q_init`` defaults to the uniform label matrix.
    """
    X = np.asarray(X_feat, dtype=float)
    N = X.shape[1]
    Q = uniform_labels(N, K) if Q_init is None else np.asarray(Q_init, dtype=float)
    Z = None if Z_init is None else np.asarray(Z_init, dtype=float)
    for _ in range(int(params.t_fssc)):
        Z = update_representations(X, Q, params, Z0=Z)
        Q = update_fuzzy_labels(build_laplacian(Z), params, K, Q)
    if Z is None:
        Z = np.zeros((N, N))
    return Z, Q
