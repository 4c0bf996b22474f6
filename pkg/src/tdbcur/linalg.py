"""Dense/sparse kernels shared by the solver.

Dense matrices are plain ``numpy.ndarray`` objects (C order); sparse
coefficient matrices are ``scipy.sparse.csr_matrix``.  Everything here is
a pure function of its inputs.
"""
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "InvalidInputError",
    "SvdFactors",
    "thin_svd",
    "pseudo_solve",
    "frob_inner",
    "sp_left_mul",
    "sp_right_mul",
    "as_csr",
    "random_orthonormal",
    "orthonormal_complement",
]


class InvalidInputError(ValueError):
    """Raised for non-finite or structurally invalid inputs."""


@dataclass(frozen=True)
class SvdFactors:
    """Economy SVD ``M = left @ diag(sigma) @ right.T``."""

    left: np.ndarray
    sigma: np.ndarray
    right: np.ndarray

    @property
    def rank(self):
        return self.sigma.shape[0]

    def to_dense(self):
        return (self.left * self.sigma) @ self.right.T


def _fix_signs(u, vt):
    # largest-magnitude entry of every left singular vector is made positive
    if u.shape[1] == 0:
        return u, vt
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[idx, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return u * signs, vt * signs[:, None]


def thin_svd(M) -> SvdFactors:
    """Economy SVD with a deterministic sign convention.

    The largest-magnitude entry of every left singular vector is positive,
    which makes singular vectors (and hence DEIM indices) reproducible.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2:
        raise InvalidInputError(f"expected a 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise InvalidInputError("thin_svd: input contains non-finite entries")
    if M.size == 0:
        k = min(M.shape)
        return SvdFactors(np.zeros((M.shape[0], k)), np.zeros(k), np.zeros((M.shape[1], k)))
    u, s, vt = np.linalg.svd(M, full_matrices=False)
    u, vt = _fix_signs(u, vt)
    return SvdFactors(u, s, vt.T.copy())


def pseudo_solve(M, rhs):
    """Minimum-norm least-squares solution of ``M @ X = rhs``.

    Singular values below ``max(M.shape) * eps * sigma_max`` are discarded.
    """
    M = np.asarray(M, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if M.shape[0] != rhs.shape[0]:
        raise InvalidInputError(f"pseudo_solve: shapes {M.shape} and {rhs.shape} not conformal")
    rcond = max(M.shape) * np.finfo(float).eps
    return np.linalg.lstsq(M, rhs, rcond=rcond)[0]


def frob_inner(Q1, Q2) -> float:
    """Frobenius inner product ``trace(Q1.T @ Q2)``."""
    Q1 = np.asarray(Q1)
    Q2 = np.asarray(Q2)
    if Q1.shape != Q2.shape:
        raise InvalidInputError(f"frob_inner: shape mismatch {Q1.shape} vs {Q2.shape}")
    return float(np.dot(Q1.ravel(), Q2.ravel()))


def as_csr(A):
    """Return ``A`` as a float CSR matrix with sorted indices."""
    A = sp.csr_matrix(A, dtype=float)
    if not A.has_sorted_indices:
        A = A.sorted_indices()
    return A


def sp_left_mul(A, X):
    """``A @ X`` for sparse ``A`` and dense ``X``."""
    if A.shape[1] != X.shape[0]:
        raise InvalidInputError(f"sp_left_mul: shapes {A.shape} and {X.shape} not conformal")
    return np.asarray(A @ X)


def sp_right_mul(X, B):
    """``X @ B`` for dense ``X`` and sparse ``B``."""
    if X.shape[1] != B.shape[0]:
        raise InvalidInputError(f"sp_right_mul: shapes {X.shape} and {B.shape} not conformal")
    # (B.T @ X.T).T keeps the work proportional to nnz(B)
    return np.asarray((B.T @ X.T).T)


def random_orthonormal(n, k, rng):
    """``n x k`` matrix with orthonormal columns drawn from ``rng``."""
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    return q * np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))


def orthonormal_complement(U, k, rng):
    """``k`` orthonormal columns orthogonal to the (orthonormal) columns of ``U``."""
    n = U.shape[0]
    if U.shape[1] + k > n:
        raise InvalidInputError(f"cannot add {k} directions to {U.shape[1]} in dimension {n}")
    W = rng.standard_normal((n, k))
    for _ in range(2):
        W -= U @ (U.T @ W)
    return np.linalg.qr(W)[0]
