import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tdbcur.io import read_dense_csv, read_matrix_market, write_dense_csv, write_matrix_market
from tdbcur.linalg import (
    InvalidInputError,
    frob_inner,
    orthonormal_complement,
    pseudo_solve,
    random_orthonormal,
    sp_left_mul,
    sp_right_mul,
    thin_svd,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def matrices(max_side=12):
    shapes = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shapes.flatmap(lambda s: arrays(float, s, elements=finite))


def test_svd_identity():
    f = thin_svd(np.eye(3))
    assert np.allclose(f.sigma, [1, 1, 1])


def test_svd_diagonal():
    f = thin_svd(np.diag([3.0, 2.0]))
    assert np.allclose(f.sigma, [3, 2])
    assert np.allclose(np.abs(f.left), np.eye(2))
    assert np.allclose(np.abs(f.right), np.eye(2))


def test_svd_reconstruction(rng):
    M = rng.standard_normal((8, 5))
    f = thin_svd(M)
    assert np.linalg.norm(f.left * f.sigma @ f.right.T - M) <= 1e-12 * np.linalg.norm(M)
    assert np.linalg.norm(f.left.T @ f.left - np.eye(5)) <= 1e-10 * 5


def test_svd_sign_convention(rng):
    f = thin_svd(rng.standard_normal((9, 4)))
    for j in range(4):
        col = f.left[:, j]
        assert col[np.argmax(np.abs(col))] > 0


def test_svd_rejects_nonfinite():
    with pytest.raises(InvalidInputError):
        thin_svd(np.array([[1.0, np.nan]]))


@given(matrices())
def test_svd_reproduces_input(M):
    f = thin_svd(M)
    assert np.linalg.norm(f.left * f.sigma @ f.right.T - M) <= 1e-12 * max(np.linalg.norm(M), 1e-300) + 1e-300
    assert np.all(np.diff(f.sigma) <= 0) and np.all(f.sigma >= 0)


@given(matrices())
def test_svd_transpose_invariance(M):
    s1 = thin_svd(M).sigma
    s2 = thin_svd(M.T).sigma
    assert np.allclose(s1, s2, rtol=0, atol=1e-12 * max(s1.max(initial=0), 1.0))


def test_svd_large(rng):
    M = rng.standard_normal((200, 200))
    f = thin_svd(M)
    assert np.linalg.norm(f.left * f.sigma @ f.right.T - M) <= 1e-12 * np.linalg.norm(M)


def test_pseudo_solve_identity(rng):
    R = rng.standard_normal((4, 3))
    assert np.allclose(pseudo_solve(np.eye(4), R), R)


def test_pseudo_solve_min_norm():
    x = pseudo_solve(np.diag([2.0, 0.0]), np.array([[2.0], [0.0]]))
    assert np.allclose(x.ravel(), [1.0, 0.0])


def test_pseudo_solve_matches_lu(rng):
    M = rng.standard_normal((5, 5)) + 5 * np.eye(5)
    b = rng.standard_normal((5, 2))
    assert np.allclose(pseudo_solve(M, b), scipy.linalg.lu_solve(scipy.linalg.lu_factor(M), b), atol=1e-12)


@given(st.integers(1, 8), st.integers(0, 4), st.integers(1, 3), st.integers(0, 2**31))
def test_pseudo_solve_full_column_rank(k, extra, nrhs, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((k + extra, k))
    X = rng.standard_normal((k, nrhs))
    Xs = pseudo_solve(M, M @ X)
    assert np.linalg.norm(M @ Xs - M @ X) <= 1e-10 * max(np.linalg.norm(M @ X), 1e-300)


def test_pseudo_solve_shape_error():
    with pytest.raises(InvalidInputError):
        pseudo_solve(np.eye(3), np.ones((2, 1)))


def test_frob_inner_examples(rng):
    assert frob_inner(np.eye(2), np.eye(2)) == 2.0
    Q1 = np.zeros((3, 3))
    Q2 = np.zeros((3, 3))
    Q1[0, 0] = 1.0
    Q2[2, 1] = 5.0
    assert frob_inner(Q1, Q2) == 0.0
    A, B = rng.standard_normal((2, 4, 3))
    assert np.isclose(frob_inner(A, B), A.ravel(order="F") @ B.ravel(order="F"))
    with pytest.raises(InvalidInputError):
        frob_inner(A, B.T)


@given(st.integers(0, 2**31))
def test_frob_inner_bilinear_symmetric(seed):
    rng = np.random.default_rng(seed)
    A, B, C = rng.standard_normal((3, 5, 4))
    a, b = rng.standard_normal(2)
    assert np.isclose(frob_inner(a * A + b * B, C), a * frob_inner(A, C) + b * frob_inner(B, C))
    assert np.isclose(frob_inner(A, B), frob_inner(B, A))
    assert frob_inner(A, A) > 0
    assert frob_inner(0 * A, 0 * A) == 0


def test_sparse_products(rng):
    X = rng.standard_normal((10, 4))
    assert np.array_equal(sp_left_mul(sp.identity(10, format="csr"), X), X)
    A = sp.csr_matrix(([2.5], ([3], [7])), shape=(10, 10))
    Y = sp_left_mul(A, X)
    assert np.allclose(Y[3], 2.5 * X[7])
    assert np.count_nonzero(np.delete(Y, 3, axis=0)) == 0
    S = sp.random(10, 10, density=0.3, random_state=3, format="csr")
    assert np.allclose(sp_left_mul(S, X), S.toarray() @ X, atol=1e-14)
    Z = rng.standard_normal((4, 10))
    assert np.allclose(sp_right_mul(Z, S), Z @ S.toarray(), atol=1e-14)
    with pytest.raises(InvalidInputError):
        sp_left_mul(S, Z)
    with pytest.raises(InvalidInputError):
        sp_right_mul(X, S)


def test_orthonormal_helpers(rng):
    U = random_orthonormal(12, 3, rng)
    assert np.allclose(U.T @ U, np.eye(3))
    W = orthonormal_complement(U, 4, rng)
    assert np.allclose(W.T @ W, np.eye(4))
    assert np.allclose(U.T @ W, 0, atol=1e-13)
    with pytest.raises(InvalidInputError):
        orthonormal_complement(U, 10, rng)


def test_matrix_market_roundtrip(tmp_path):
    S = sp.random(7, 5, density=0.4, random_state=1, format="csr")
    write_matrix_market(tmp_path / "S.mtx", S)
    T = read_matrix_market(tmp_path / "S.mtx")
    assert T.shape == S.shape
    assert np.array_equal(T.toarray(), S.toarray())
    assert T.has_sorted_indices


def test_dense_csv_roundtrip(tmp_path, rng):
    X = rng.standard_normal((3, 4))
    write_dense_csv(tmp_path / "X.csv", X)
    assert np.array_equal(read_dense_csv(tmp_path / "X.csv"), X)
    (tmp_path / "bad.csv").write_text("2,2\n1,2\n")
    with pytest.raises(InvalidInputError):
        read_dense_csv(tmp_path / "bad.csv")
