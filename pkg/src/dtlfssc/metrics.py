"""Clustering error and principal angles of transformed subspaces."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.optimize import linear_sum_assignment


def _as_labels(y, name):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be a 1-D label vector")
    if y.size and (not np.issubdtype(y.dtype, np.integer) or y.min() < 0):
        raise ValueError(f"{name} must hold nonnegative integer ids")
    return y.astype(np.int64)


def clustering_error(pred, truth) -> float:
    """Percentage of misclassified samples under the best id matching.

    Predicted ids are matched one-to-one to truth ids by maximizing the
    agreement count on the confusion matrix (Hungarian assignment).
    """
    pred = _as_labels(pred, "pred")
    truth = _as_labels(truth, "truth")
    if pred.shape != truth.shape:
        raise ValueError(
            f"length mismatch: pred {pred.size} vs truth {truth.size}")
    N = pred.size
    if N == 0:
        return 0.0
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(truth, return_inverse=True)
    C = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(C, (p, t), 1)
    rows, cols = linear_sum_assignment(C, maximize=True)
    return 100.0 * (N - C[rows, cols].sum()) / N


def _unit_columns(V, name):
    nrm = np.linalg.norm(V, axis=0)
    zero = nrm == 0
    if zero.all():
        raise ValueError(f"all transformed samples in {name} are zero")
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero transformed sample(s) in {name} ignored",
                      RuntimeWarning, stacklevel=3)
    return V[:, ~zero] / nrm[~zero]


def smallest_principal_angle(A, Xi, Xj) -> float:
    """Smallest angle (degrees) between any transformed pair ``(A x_i, A x_j)``.

    Uses ``|cos|`` so the result lies in [0, 90]: a sample and its negation
    span the same line.
    """
    A = np.asarray(A, dtype=float)
    U = _unit_columns(A @ np.atleast_2d(np.asarray(Xi, dtype=float)), "Xi")
    V = _unit_columns(A @ np.atleast_2d(np.asarray(Xj, dtype=float)), "Xj")
    c = float(np.abs(U.T @ V).max())
    return float(np.degrees(np.arccos(min(c, 1.0))))


def angle_matrix(A, X, labels) -> np.ndarray:
    """K x K matrix of smallest principal angles between label groups."""
    X = np.asarray(X, dtype=float)
    labels = _as_labels(labels, "labels")
    if labels.size != X.shape[1]:
        raise ValueError(
            f"{labels.size} labels for {X.shape[1]} samples")
    ids = np.unique(labels)
    groups = [X[:, labels == k] for k in ids]
    K = len(groups)
    out = np.zeros((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            out[i, j] = out[j, i] = smallest_principal_angle(A, groups[i], groups[j])
    return out
