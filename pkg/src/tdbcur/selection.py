"""DEIM index selection and sparsity-pattern adjacency sets."""
import numpy as np
import scipy.sparse as sp

from .linalg import InvalidInputError

__all__ = ["DeimError", "deim", "find_adjacent", "row_support"]


class DeimError(np.linalg.LinAlgError):
    pass


def deim(basis):
    """Greedy DEIM interpolation indices for the columns of ``basis``.

    Parameters
    ----------
    basis : (n, r) array
        Linearly independent columns, typically singular vectors.

    Returns
    -------
    (r,) int array of distinct row indices.  Exact ties in the residual
    magnitude resolve to the lowest index.
    """
    U = np.asarray(basis, dtype=float)
    if U.ndim != 2:
        raise InvalidInputError(f"deim expects a 2-D basis, got shape {U.shape}")
    n, r = U.shape
    if r > n:
        raise InvalidInputError(f"deim: requested {r} indices from {n} rows")
    if r == 0:
        return np.zeros(0, dtype=np.intp)
    idx = np.empty(r, dtype=np.intp)
    res = np.abs(U[:, 0])
    if res.max() == 0.0:
        raise DeimError("deim: first basis column is zero")
    idx[0] = int(np.argmax(res))
    for i in range(1, r):
        P = idx[:i]
        try:
            c = np.linalg.solve(U[P, :i], U[P, i])
        except np.linalg.LinAlgError as exc:
            raise DeimError(f"deim: interpolation system singular at step {i} (indices {P.tolist()})") from exc
        res = np.abs(U[:, i] - U[:, :i] @ c)
        j = int(np.argmax(res))
        if res[j] == 0.0:
            raise DeimError(f"deim: column {i} lies in the span of the previous columns")
        idx[i] = j
    return idx


def row_support(A, rows):
    """Sorted column indices where ``A[rows, :]`` has stored entries.

    ``A`` must be CSR.  Stored zeros count as nonzeros so the result only
    depends on the sparsity structure.
    """
    rows = np.asarray(rows, dtype=np.intp)
    if rows.size == 0:
        return np.zeros(0, dtype=np.intp)
    starts = A.indptr[rows]
    stops = A.indptr[rows + 1]
    pieces = [A.indices[a:b] for a, b in zip(starts, stops)]
    return np.unique(np.concatenate(pieces)).astype(np.intp)


def find_adjacent(B, q):
    """Sorted row indices ``j`` with ``B[j, q_k]`` structurally nonzero for some ``k``."""
    q = np.asarray(q, dtype=np.intp)
    if q.size and (q.min() < 0 or q.max() >= B.shape[1]):
        raise InvalidInputError("find_adjacent: column index out of range")
    Bc = sp.csc_matrix(B)
    starts = Bc.indptr[q]
    stops = Bc.indptr[q + 1]
    if q.size == 0:
        return np.zeros(0, dtype=np.intp)
    return np.unique(np.concatenate([Bc.indices[a:b] for a, b in zip(starts, stops)])).astype(np.intp)
