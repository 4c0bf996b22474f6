"""File formats: Matrix Market for sparse matrices, CSV for dense ones."""
import csv
import io

import numpy as np
import scipy.io
import scipy.sparse as sp

from .linalg import as_csr, InvalidInputError

__all__ = ["read_matrix_market", "write_matrix_market", "read_dense_csv", "write_dense_csv"]


def read_matrix_market(path):
    """Read a Matrix Market coordinate file into a CSR matrix."""
    A = scipy.io.mmread(path)
    if not sp.issparse(A):
        A = sp.csr_matrix(A)
    return as_csr(A)


def write_matrix_market(path, A, comment=""):
    scipy.io.mmwrite(path, sp.coo_matrix(A), comment=comment, field="real", precision=17)


def write_dense_csv(path, X):
    """Header row ``rows,cols`` followed by the row-major values."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise InvalidInputError("write_dense_csv expects a 2-D array")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([X.shape[0], X.shape[1]])
        for row in X:
            w.writerow([repr(float(v)) for v in row])


def read_dense_csv(path):
    with open(path, newline="") as fh:
        text = fh.read()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidInputError(f"{path}: empty file")
    n, m = (int(v) for v in rows[0])
    body = rows[1:]
    if len(body) != n or any(len(r) != m for r in body):
        raise InvalidInputError(f"{path}: header says {n}x{m}, body disagrees")
    X = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(n, m)
    if not np.all(np.isfinite(X)):
        raise InvalidInputError(f"{path}: non-finite entries")
    return X
