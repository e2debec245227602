"""Synthetic union-of-subspaces data, trajectory stacking and CSV I/O."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SyntheticSpec:
    K: int = 3
    ambient_dim: int = 30
    subspace_dim: int = 4
    points_per_cluster: int = 50
    noise_sigma: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.subspace_dim < 1:
            raise ValueError("subspace_dim must be >= 1")
        if not self.subspace_dim < self.ambient_dim:
            raise ValueError("subspace_dim must be < ambient_dim")
        if self.points_per_cluster < self.subspace_dim:
            raise ValueError("points_per_cluster must be >= subspace_dim")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")


def generate_synthetic(spec: SyntheticSpec):
    """Sample ``K`` independent random subspaces and points on each.

    Returns ``(X, labels)`` with ``X`` of shape (n, K*m); columns are grouped
    by cluster in order.
    """
    rng = np.random.default_rng(spec.seed)
    n, d, m = spec.ambient_dim, spec.subspace_dim, spec.points_per_cluster
    blocks, labels = [], []
    for k in range(spec.K):
        basis, _ = np.linalg.qr(rng.standard_normal((n, d)))
        pts = basis @ rng.standard_normal((d, m))
        if spec.noise_sigma > 0:
            pts = pts + spec.noise_sigma * rng.standard_normal((n, m))
        blocks.append(pts)
        labels.append(np.full(m, k))
    return np.hstack(blocks), np.concatenate(labels)


def subspace_bases(spec: SyntheticSpec):
    """The orthonormal bases drawn by :func:`generate_synthetic` for ``spec``."""
    rng = np.random.default_rng(spec.seed)
    n, d, m = spec.ambient_dim, spec.subspace_dim, spec.points_per_cluster
    out = []
    for _ in range(spec.K):
        basis, _ = np.linalg.qr(rng.standard_normal((n, d)))
        rng.standard_normal((d, m))
        if spec.noise_sigma > 0:
            rng.standard_normal((n, m))
        out.append(basis)
    return out


def stack_trajectories(frames):
    """Stack F per-frame 2 x N point matrices into one 2F x N matrix."""
    frames = [np.asarray(f, dtype=float) for f in frames]
    if not frames:
        raise ValueError("need at least one frame")
    N = frames[0].shape[1]
    for t, f in enumerate(frames):
        if f.ndim != 2 or f.shape[0] != 2 or f.shape[1] != N:
            raise ValueError(f"frame {t} has shape {f.shape}, expected (2, {N})")
    return np.vstack(frames)


def normalize_columns(X):
    """Scale every nonzero column to unit l2 norm; zero columns stay zero."""
    X = np.asarray(X, dtype=float)
    nrm = np.linalg.norm(X, axis=0)
    zero = nrm == 0
    if zero.any():
        warnings.warn(f"{int(zero.sum())} zero column(s) left unnormalized",
                      RuntimeWarning, stacklevel=2)
    return X / np.where(zero, 1.0, nrm)


class ParseError(ValueError):
    pass


def write_matrix(path, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in X:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")


def read_matrix(path):
    """Read a headerless comma-separated float matrix.

    Raises :class:`ParseError` naming the line for ragged rows, non-numeric
    tokens or non-finite values.
    """
    rows = []
    width = None
    with open(path, "r", encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric token") from None
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ParseError(
                    f"{path}:{lineno}: expected {width} values, got {len(row)}")
            if not all(np.isfinite(row)):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            rows.append(row)
    if not rows:
        raise ParseError(f"{path}: empty matrix file")
    return np.array(rows)


def write_labels(path, labels):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in np.asarray(labels).ravel():
            fh.write(f"{int(v)}\n")


def read_labels(path):
    out = []
    with open(path, "r", encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                v = int(line)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: not an integer label") from None
            if v < 0:
                raise ParseError(f"{path}:{lineno}: negative label")
            out.append(v)
    return np.array(out, dtype=np.int64)


def matrix_io(path, direction, X=None):
    """``matrix_io(path, "read")`` or ``matrix_io(path, "write", X)``."""
    if direction == "read":
        return read_matrix(path)
    if direction == "write":
        if X is None:
            raise ValueError("write needs a matrix")
        write_matrix(path, X)
        return None
    raise ValueError(f"direction must be 'read' or 'write', not {direction!r}")
