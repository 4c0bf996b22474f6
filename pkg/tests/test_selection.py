import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from tdbcur.linalg import InvalidInputError, random_orthonormal, thin_svd
from tdbcur.selection import DeimError, deim, find_adjacent, row_support


def greedy_deim(U):
    """Plain transcription of the greedy loop used as an oracle."""
    n, r = U.shape
    p = [int(np.argmax(np.abs(U[:, 0])))]
    for i in range(1, r):
        P = np.zeros((n, i))
        P[p, np.arange(i)] = 1.0
        c = np.linalg.solve(P.T @ U[:, :i], P.T @ U[:, i])
        res = U[:, i] - U[:, :i] @ c
        p.append(int(np.argmax(np.abs(res))))
    return np.array(p)


def test_deim_single_spike():
    assert deim(np.eye(5)[:, [2]]).tolist() == [2]


def test_deim_two_unit_vectors():
    assert deim(np.eye(5)[:, :2]).tolist() == [0, 1]


def test_deim_matches_greedy_oracle(rng):
    for _ in range(10):
        U = random_orthonormal(6, 3, rng)
        assert deim(U).tolist() == greedy_deim(U).tolist()


def test_deim_ties_lowest_index():
    U = np.ones((4, 1)) / 2
    assert deim(U).tolist() == [0]


def test_deim_errors():
    with pytest.raises(InvalidInputError):
        deim(np.ones((2, 3)))
    with pytest.raises(DeimError):
        deim(np.zeros((4, 1)))
    U = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 0.0]])
    with pytest.raises(DeimError):
        deim(U)


@given(st.integers(2, 30), st.integers(1, 6), st.integers(0, 2**31))
def test_deim_distinct_and_invertible(n, r, seed):
    r = min(r, n)
    rng = np.random.default_rng(seed)
    U = thin_svd(rng.standard_normal((n, r))).left
    p = deim(U)
    assert len(set(p.tolist())) == r
    eta = np.linalg.norm(np.linalg.inv(U[p]), 2)
    assert np.isfinite(eta) and eta >= 1 - 1e-12


@given(st.integers(3, 25), st.integers(1, 5), st.integers(0, 2**31))
def test_deim_permutation_equivariant(n, r, seed):
    r = min(r, n)
    rng = np.random.default_rng(seed)
    U = random_orthonormal(n, r, rng)
    perm = rng.permutation(n)
    p = deim(U)
    p_perm = deim(U[perm])
    # row perm[j] of U sits at position j of the permuted basis
    assert perm[p_perm].tolist() == p.tolist()


def test_find_adjacent_examples():
    assert find_adjacent(sp.identity(6, format="csr"), [2, 5]).tolist() == [2, 5]
    T = sp.diags([1, -2, 1], [-1, 0, 1], shape=(7, 7), format="csr")
    assert find_adjacent(T, [3]).tolist() == [2, 3, 4]
    with pytest.raises(InvalidInputError):
        find_adjacent(T, [7])


@given(st.integers(2, 20), st.floats(0.05, 0.6), st.integers(0, 2**31))
def test_find_adjacent_dense_slice_oracle(n, density, seed):
    rng = np.random.default_rng(seed)
    B = sp.random(n, n, density=density, random_state=seed % 2**32, format="csr")
    q = rng.choice(n, size=rng.integers(1, n + 1), replace=False)
    expected = np.unique(np.nonzero(B.toarray()[:, q])[0])
    assert find_adjacent(B, q).tolist() == expected.tolist()
    # row_support of the transpose is the same set
    assert row_support(sp.csr_matrix(B.T), q).tolist() == expected.tolist()


def test_find_adjacent_structural_zeros():
    B = sp.csr_matrix((np.array([0.0, 1.0]), np.array([1, 2]), np.array([0, 1, 2, 2])), shape=(3, 3))
    assert find_adjacent(B, [1]).tolist() == [0]


@given(st.integers(1, 15), st.integers(0, 2**31))
def test_find_adjacent_contains_diagonal(n, seed):
    rng = np.random.default_rng(seed)
    B = sp.random(n, n, density=0.3, random_state=seed % 2**32, format="csr") + sp.identity(n)
    q = rng.choice(n, size=max(1, n // 2), replace=False)
    out = set(find_adjacent(B, q).tolist())
    assert set(q.tolist()) <= out
    assert find_adjacent(sp.identity(n, format="csr"), q).tolist() == sorted(q.tolist())
