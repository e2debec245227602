"""Numerical building blocks shared by the clustering and transform modules.

Proximal maps, the closed-form positive root used by log-det barrier
subproblems, Euclidean projection onto the probability simplex and a
(batched) FISTA solver for weighted lasso problems.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np


class ConvergenceWarning(UserWarning):
    """An iterative solver stopped at its iteration cap before meeting tol."""


@dataclass(frozen=True)
class SolverOptions:
    """Iteration controls for the iterative solvers.

    Parameters
    ----------
    max_iters : int
        Hard cap on iterations.
    tol : float
        Stopping threshold. Relative duality gap for FISTA (relative
        objective change when the target norm is not known), primal/dual
        residual for the ADMM solvers.
    rho : float or None
        ADMM penalty. ``None`` lets each ADMM solver pick a penalty scaled
        to its problem data.
    seed : int
        Seed for any randomized step (k-means restarts, initial operators).
    """

    max_iters: int = 500
    tol: float = 1e-6
    rho: float | None = None
    seed: int = 0

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be > 0")

    def with_(self, **kwargs) -> "SolverOptions":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class WeightedLassoProblem:
    """min_z 0.5 * ||target - dictionary @ z||^2 + sum_j weights[j] * |z_j|"""

    dictionary: np.ndarray
    target: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.dictionary, dtype=float)
        x = np.asarray(self.target, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if D.ndim != 2 or D.size == 0:
            raise ValueError("dictionary must be a nonempty 2-D array")
        if x.shape != (D.shape[0],):
            raise ValueError(
                f"target has shape {x.shape}, expected ({D.shape[0]},)")
        if w.shape != (D.shape[1],):
            raise ValueError(
                f"weights has shape {w.shape}, expected ({D.shape[1]},)")
        if not (np.all(np.isfinite(D)) and np.all(np.isfinite(x))
                and np.all(np.isfinite(w))):
            raise FloatingPointError("non-finite entries in lasso problem")
        if np.any(w <= 0):
            raise ValueError("weights must be strictly positive")
        object.__setattr__(self, "dictionary", D)
        object.__setattr__(self, "target", x)
        object.__setattr__(self, "weights", w)

    def objective(self, z: np.ndarray) -> float:
        r = self.target - self.dictionary @ z
        return 0.5 * float(r @ r) + float(self.weights @ np.abs(z))


def soft_threshold(v, w):
    """Elementwise shrinkage ``sign(v) * max(|v| - w, 0)``.

    ``w`` may be a scalar or an array broadcastable to ``v``; a shape that
    does not broadcast raises ``ValueError``.
    """
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    if w.ndim and w.shape != v.shape:
        try:
            np.broadcast_shapes(v.shape, w.shape)
        except ValueError:
            raise ValueError(
                f"shape mismatch: v {v.shape} vs w {w.shape}") from None
        if np.broadcast_shapes(v.shape, w.shape) != v.shape:
            raise ValueError(f"shape mismatch: v {v.shape} vs w {w.shape}")
    return np.sign(v) * np.maximum(np.abs(v) - w, 0.0)


def _power_iteration(gram_apply, v0, n_iter=50):
    """Column-wise largest eigenvalue estimates of PSD operators.

    ``gram_apply`` maps an (m, B) block to the (m, B) block of products, one
    operator per column. Returns the Rayleigh quotients after ``n_iter``
    normalized iterations.
    """
    v = v0 / np.maximum(np.linalg.norm(v0, axis=0), 1e-300)
    for _ in range(n_iter):
        u = gram_apply(v)
        nrm = np.linalg.norm(u, axis=0)
        v = u / np.where(nrm > 0, nrm, 1.0)
    return np.einsum("ij,ij->j", v, gram_apply(v))


def _polish_support(gram, corr, weights, mask, Z, max_pivots=10):
    """Refine each column by a few active-set pivots from its current support.

    On support ``S`` with signs ``s`` the lasso optimum is
    ``gram_SS^{-1} (corr_S - w_S s)``. If a sign flips on the way there the
    step stops at the first zero crossing and that coordinate leaves ``S``;
    otherwise the most violated optimality condition outside ``S`` enters.
    Columns whose system turns singular are returned unchanged.
    """
    out = Z.copy()
    for b in range(Z.shape[1]):
        z = Z[:, b].copy()
        S = list(np.flatnonzero(z))
        sgn = np.sign(z)
        ok = True
        for _ in range(max_pivots):
            if not S:
                break
            idx = np.array(S)
            s = sgn[idx]
            try:
                zs = np.linalg.solve(gram[np.ix_(idx, idx)],
                                     corr[idx, b] - weights[idx, b] * s)
            except np.linalg.LinAlgError:
                ok = False
                break
            flip = np.sign(zs) != s
            if flip.any():
                zi = z[idx]
                with np.errstate(divide="ignore", invalid="ignore"):
                    frac = np.where(flip, zi / (zi - zs), np.inf)
                k = int(np.argmin(frac))
                z[idx] = zi + frac[k] * (zs - zi)
                z[idx[k]] = 0.0
                S.pop(k)
                continue
            z[:] = 0.0
            z[idx] = zs
            g = corr[:, b] - gram[:, idx] @ zs
            viol = np.where(mask[:, b], np.abs(g) - weights[:, b], -np.inf)
            viol[idx] = -np.inf
            j = int(np.argmax(viol))
            if viol[j] <= 0:
                break
            S.append(j)
            sgn[j] = np.sign(g[j])
        if ok:
            out[:, b] = z
    return out


def fista_weighted_lasso(gram, corr, weights, opts: SolverOptions | None = None,
                         *, target_sqnorm=None, mask=None, lipschitz=None,
                         z0=None):
    """Batched FISTA with monotone and gradient restarts for weighted lasso.

    Column ``b`` of the result minimizes::

        0.5 * z' gram z - corr[:, b]' z + sum_j weights[j, b] |z_j|

    subject to ``z_j = 0`` wherever ``mask[j, b]`` is False. ``gram`` is
    shared by all columns (m x m, PSD), ``corr`` and ``weights`` are (m, B).

    Every few iterations each unconverged column is also offered the exact
    solution on its current support (a few active-set pivots) unless that
    sign pattern was already tried; the offer is taken only if it lowers the
    objective. Converged columns are frozen.

    Parameters
    ----------
    target_sqnorm : array of shape (B,), optional
        ``||target||^2`` per column. When given, the objective is the true
        lasso objective and iteration stops once the relative duality gap
        drops below ``opts.tol`` (a certificate on suboptimality). Without
        it, the stopping test is the relative objective change.
    mask : bool array (m, B), optional
        Support constraint, used to exclude a sample from its own
        dictionary without copying the Gram matrix.
    lipschitz : array of shape (B,), optional
        Step-size constants; estimated by 50 power iterations otherwise.

    Returns
    -------
    Z : ndarray (m, B)
    n_iter : int
    """
    opts = opts or SolverOptions()
    gram = np.asarray(gram, dtype=float)
    corr = np.asarray(corr, dtype=float)
    squeeze = corr.ndim == 1
    if squeeze:
        corr = corr[:, None]
    m, B = corr.shape
    weights = np.asarray(weights, dtype=float)
    if weights.ndim == 1:
        weights = weights[:, None]
    weights = np.broadcast_to(weights, (m, B))
    if mask is None:
        maskf = np.ones((m, B))
    else:
        maskf = np.broadcast_to(np.asarray(mask, dtype=bool), (m, B)).astype(float)
    c0 = np.zeros(B) if target_sqnorm is None else 0.5 * np.asarray(
        target_sqnorm, dtype=float).reshape(B)

    tiny = np.finfo(float).tiny

    def objective(Z, GZ, cols):
        return (c0[cols] + np.einsum("ij,ij->j", Z, 0.5 * GZ - corr[:, cols])
                + np.einsum("ij,ij->j", weights[:, cols], np.abs(Z)))

    def duality_gap(Z, GZ, F, cols):
        # dual point: residual scaled into the box |D_j' theta| <= w_j
        R = corr[:, cols] - GZ
        Dtr = np.abs(R * maskf[:, cols])
        xtr = 2.0 * c0[cols] - np.einsum("ij,ij->j", corr[:, cols], Z)
        rtr = np.maximum(xtr - np.einsum("ij,ij->j", R, Z), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(Dtr > 0, weights[:, cols] / Dtr, np.inf)
        s = np.minimum(1.0, ratio.min(axis=0))
        return F - (xtr * s - 0.5 * s * s * rtr)

    if lipschitz is None:
        lip = _power_iteration(lambda V: (gram @ V) * maskf, maskf.copy())
        # power iteration approaches the top eigenvalue from below
        lip = 1.01 * lip
    else:
        lip = np.broadcast_to(np.asarray(lipschitz, dtype=float), (B,)).copy()
    lip = np.maximum(lip, tiny)

    Z = np.zeros((m, B)) if z0 is None else np.array(z0, dtype=float).reshape(m, B) * maskf
    # per-column state of the unconverged columns; Gram products are carried
    # along so each iteration costs one matrix product
    cols = np.arange(B)
    Zc = Z.copy()
    GZ = gram @ Zc
    Yc, GY = Zc.copy(), GZ.copy()
    t = np.ones(B)
    F = objective(Zc, GZ, cols)
    gap_every, polish_every = 5, 10
    tried = {}
    n_iter = 0
    for n_iter in range(1, int(opts.max_iters) + 1):
        mk, lp = maskf[:, cols], lip[cols]
        Znew = soft_threshold(Yc - (GY - corr[:, cols]) * mk / lp,
                              weights[:, cols] / lp) * mk
        GZnew = gram @ Znew
        Fnew = objective(Znew, GZnew, cols)
        worse = Fnew > F
        # monotone safeguard: drop the step, restart momentum from Z
        Znew[:, worse] = Zc[:, worse]
        GZnew[:, worse] = GZ[:, worse]
        Fnew = np.where(worse, F, Fnew)
        # gradient restart: momentum points uphill
        uphill = np.einsum("ij,ij->j", Yc - Znew, Znew - Zc) > 0
        tnew = np.where(worse | uphill, 1.0,
                        0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t)))
        mom = (t - 1.0) / tnew
        Yc = Znew + mom * (Znew - Zc)
        GY = GZnew + mom * (GZnew - GZ)
        if target_sqnorm is None:
            rel = np.abs(F - Fnew) / np.maximum(np.abs(F), tiny)
            done = ~worse & (rel < opts.tol)
        elif n_iter % gap_every:
            done = np.zeros(cols.size, dtype=bool)
        else:
            done = (duality_gap(Znew, GZnew, Fnew, cols)
                    < opts.tol * np.maximum(Fnew, tiny))
            # once the support has settled the closed form on it is exact;
            # a support already polished once gives the same answer again
            op = []
            if n_iter % polish_every == 0:
                for i in np.flatnonzero(~done):
                    sig = np.sign(Znew[:, i]).tobytes()
                    if tried.get(cols[i]) != sig:
                        tried[cols[i]] = sig
                        op.append(i)
            op = np.array(op, dtype=int)
            if op.size:
                Zp = _polish_support(gram, corr[:, cols[op]], weights[:, cols[op]],
                                     maskf[:, cols[op]] > 0, Znew[:, op])
                GZp = gram @ Zp
                Fp = objective(Zp, GZp, cols[op])
                better = Fp < Fnew[op]
                b = op[better]
                Znew[:, b], GZnew[:, b] = Zp[:, better], GZp[:, better]
                Yc[:, b], GY[:, b] = Zp[:, better], GZp[:, better]
                Fnew[b] = Fp[better]
                tnew[b] = 1.0
                done[b] = (duality_gap(Znew[:, b], GZnew[:, b], Fnew[b], cols[b])
                           < opts.tol * np.maximum(Fnew[b], tiny))
        Zc, GZ, F, t = Znew, GZnew, Fnew, tnew
        if done.any():
            Z[:, cols[done]] = Zc[:, done]
            keep = ~done
            cols = cols[keep]
            Zc, GZ, Yc, GY = Zc[:, keep], GZ[:, keep], Yc[:, keep], GY[:, keep]
            F, t = F[keep], t[keep]
        if cols.size == 0:
            break
    else:
        Z[:, cols] = Zc
        warnings.warn(
            f"FISTA reached max_iters={opts.max_iters} with "
            f"{cols.size} unconverged column(s)", ConvergenceWarning,
            stacklevel=2)
    return (Z[:, 0] if squeeze else Z), n_iter


def solve_weighted_lasso(problem: WeightedLassoProblem,
                         opts: SolverOptions | None = None) -> np.ndarray:
    """Minimize ``0.5||x - D z||^2 + sum_j w_j |z_j|`` by FISTA.

    Step size is ``1/L`` with ``L`` the top eigenvalue of ``D'D`` from 50
    power iterations.
    """
    D, x = problem.dictionary, problem.target
    z, _ = fista_weighted_lasso(D.T @ D, D.T @ x, problem.weights, opts,
                                target_sqnorm=np.array([x @ x]))
    return z


def project_simplex(v):
    """Euclidean projection onto the probability simplex.

    Works on a single vector or row-wise on a 2-D array. Uses the exact
    sort-and-threshold algorithm: the output is ``max(v - nu, 0)`` with
    ``nu`` the unique shift making the entries sum to one.
    """
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[-1] < 1:
        raise ValueError("need at least one coordinate")
    if not np.all(np.isfinite(v)):
        raise FloatingPointError("non-finite input to project_simplex")
    V = np.atleast_2d(v)
    # shifting by the row max is exact where it matters and keeps the
    # threshold arithmetic at unit scale
    V = V - V.max(axis=1, keepdims=True)
    n, K = V.shape
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    k = np.arange(1, K + 1)
    cond = U - css / k > 0
    # last index where the condition holds (always holds at index 0)
    rho = K - 1 - np.argmax(cond[:, ::-1], axis=1)
    nu = css[np.arange(n), rho] / (rho + 1)
    out = np.maximum(V - nu[:, None], 0.0)
    return out.reshape(v.shape)


def prox_nuclear(M, t):
    """Singular value thresholding: ``U max(S - t, 0) V'``."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise FloatingPointError("non-finite input to prox_nuclear")
    if M.size == 0:
        return M.copy()
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    s = np.maximum(s - t, 0.0)
    keep = s > 0
    return (U[:, keep] * s[keep]) @ Vt[keep]


def positive_quadratic_log_root(a, b, c):
    """Positive minimizer of ``a s^2 - b s - c log(s)`` over ``s > 0``.

    Solves ``2 a s^2 - b s - c = 0`` and keeps the positive root
    ``(b + sqrt(b^2 + 8 a c)) / (4 a)``. Vectorized over broadcast inputs.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    if np.any(a <= 0) or np.any(c <= 0):
        raise ValueError("a and c must be positive")
    if np.any(b < 0):
        raise ValueError("b must be nonnegative")
    out = (b + np.sqrt(b * b + 8.0 * a * c)) / (4.0 * a)
    return out[()] if out.ndim == 0 else out


def logdet_barrier_shrink(M, rho, tau):
    """Prox of ``-tau log det(Y'Y)`` with weight ``rho/2`` on ``||M - Y||^2``.

    ``M`` is m x k with m >= k; the barrier acts on the k x k Gram ``Y'Y``.
    Each singular value ``s`` of ``M`` is replaced by the positive root of
    ``(rho/2) sigma^2 - rho s sigma - 2 tau log sigma``, so the result always
    has full column rank.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise ValueError("M must be a matrix")
    m, k = M.shape
    if m < k:
        raise ValueError(
            f"M is {m}x{k}; need rows >= columns for a nonsingular Gram")
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    sig = positive_quadratic_log_root(rho / 2.0, rho * s, 2.0 * tau)
    return (U * sig) @ Vt


class AndersonAccelerator:
    """Safeguarded type-II Anderson mixing for a fixed-point map ``x -> g(x)``.

    Call :meth:`propose` with the current iterate and its image; it returns
    the extrapolated point built from the last ``memory`` residuals. The
    caller decides whether to accept it (and calls :meth:`reset` if not).
    """

    def __init__(self, memory: int = 5):
        self.memory = memory
        self._x: list[np.ndarray] = []
        self._g: list[np.ndarray] = []

    def reset(self):
        self._x.clear()
        self._g.clear()

    def propose(self, x, gx):
        self._x.append(x)
        self._g.append(gx)
        if len(self._x) > self.memory + 1:
            self._x.pop(0)
            self._g.pop(0)
        if len(self._x) < 2:
            return gx
        G = np.array(self._g).T
        F = G - np.array(self._x).T
        dF = np.diff(F, axis=1)
        dG = np.diff(G, axis=1)
        gamma = np.linalg.lstsq(dF, F[:, -1], rcond=None)[0]
        return gx - dG @ gamma
