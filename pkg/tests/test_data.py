import numpy as np
import pytest

from dtlfssc.data import (ParseError, SyntheticSpec, generate_synthetic,
                          matrix_io, normalize_columns, read_labels,
                          read_matrix, stack_trajectories, subspace_bases,
                          write_labels, write_matrix)
from dtlfssc.pipeline import ssc_baseline


# -- synthetic data -----------------------------------------------------

def test_spec_validation():
    with pytest.raises(ValueError, match="subspace_dim must be < ambient_dim"):
        SyntheticSpec(ambient_dim=4, subspace_dim=4)
    with pytest.raises(ValueError):
        SyntheticSpec(K=0)
    with pytest.raises(ValueError):
        SyntheticSpec(noise_sigma=-1.0)
    with pytest.raises(ValueError):
        SyntheticSpec(subspace_dim=4, points_per_cluster=3)


def test_noise_free_blocks_have_rank_d():
    spec = SyntheticSpec(K=3, ambient_dim=30, subspace_dim=4,
                         points_per_cluster=50, noise_sigma=0.0, seed=3)
    X, labels = generate_synthetic(spec)
    assert X.shape == (30, 150)
    np.testing.assert_array_equal(np.bincount(labels), [50, 50, 50])
    for k in range(3):
        assert np.linalg.matrix_rank(X[:, labels == k], tol=1e-9) == 4


def test_points_lie_on_their_own_subspace():
    spec = SyntheticSpec(noise_sigma=0.0, seed=5)
    X, labels = generate_synthetic(spec)
    for k, B in enumerate(subspace_bases(spec)):
        Xk = X[:, labels == k]
        resid = Xk - B @ (B.T @ Xk)
        assert np.linalg.norm(resid, axis=0).max() < 1e-10


def test_generation_is_deterministic():
    spec = SyntheticSpec(seed=11)
    X1, y1 = generate_synthetic(spec)
    X2, y2 = generate_synthetic(spec)
    np.testing.assert_array_equal(X1, X2)
    np.testing.assert_array_equal(y1, y2)
    X3, _ = generate_synthetic(SyntheticSpec(seed=12))
    assert not np.array_equal(X1, X3)


def test_ssc_separates_the_default_instance():
    X, labels = generate_synthetic(SyntheticSpec(seed=0))
    from dtlfssc.metrics import clustering_error
    _, pred = ssc_baseline(normalize_columns(X), 3, alpha=0.03)
    assert clustering_error(pred, labels) < 5.0


# -- trajectories and normalization -------------------------------------

def test_stack_trajectories_shapes():
    rng = np.random.default_rng(0)
    frames = [rng.standard_normal((2, 266)) for _ in range(30)]
    W = stack_trajectories(frames)
    assert W.shape == (60, 266)
    np.testing.assert_array_equal(W[2:4], frames[1])


def test_stack_trajectories_rejects_ragged_frames():
    with pytest.raises(ValueError, match="frame 1"):
        stack_trajectories([np.zeros((2, 5)), np.zeros((2, 4))])
    with pytest.raises(ValueError):
        stack_trajectories([])


def test_normalize_columns():
    np.testing.assert_allclose(normalize_columns(np.array([[3.0], [4.0]])).ravel(),
                               [0.6, 0.8])
    with pytest.warns(RuntimeWarning, match="zero column"):
        out = normalize_columns(np.array([[3.0, 0.0], [4.0, 0.0]]))
    np.testing.assert_array_equal(out[:, 1], 0.0)


# -- CSV I/O ------------------------------------------------------------

def test_matrix_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    X = rng.standard_normal((7, 5)) * 10.0 ** rng.integers(-8, 8, (7, 5))
    path = tmp_path / "x.csv"
    write_matrix(path, X)
    np.testing.assert_allclose(read_matrix(path), X, rtol=1e-12, atol=0)
    np.testing.assert_array_equal(matrix_io(path, "read"), X)


def test_matrix_io_dispatch(tmp_path):
    path = tmp_path / "x.csv"
    matrix_io(path, "write", np.eye(2))
    np.testing.assert_array_equal(matrix_io(path, "read"), np.eye(2))
    with pytest.raises(ValueError):
        matrix_io(path, "write")
    with pytest.raises(ValueError):
        matrix_io(path, "append", np.eye(2))


def test_ragged_matrix_names_the_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2,3\n4,5\n")
    with pytest.raises(ParseError, match=":2:"):
        read_matrix(path)


def test_non_numeric_and_non_finite_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,2\n3,x\n")
    with pytest.raises(ParseError, match="non-numeric"):
        read_matrix(path)
    path.write_text("1,nan\n")
    with pytest.raises(ParseError, match="non-finite"):
        read_matrix(path)
    path.write_text("\n\n")
    with pytest.raises(ParseError, match="empty"):
        read_matrix(path)


def test_crlf_accepted(tmp_path):
    path = tmp_path / "crlf.csv"
    path.write_bytes(b"1,2\r\n3,4\r\n")
    np.testing.assert_array_equal(read_matrix(path), [[1.0, 2.0], [3.0, 4.0]])


def test_labels_read_and_round_trip(tmp_path):
    path = tmp_path / "y.csv"
    path.write_text("0\n0\n1\n")
    np.testing.assert_array_equal(read_labels(path), [0, 0, 1])
    write_labels(path, np.array([2, 0, 1]))
    assert path.read_bytes() == b"2\n0\n1\n"
    np.testing.assert_array_equal(read_labels(path), [2, 0, 1])


def test_bad_labels_rejected(tmp_path):
    path = tmp_path / "y.csv"
    path.write_text("0\n1.5\n")
    with pytest.raises(ParseError, match=":2:"):
        read_labels(path)
    path.write_text("0\n-1\n")
    with pytest.raises(ParseError, match="negative"):
        read_labels(path)
