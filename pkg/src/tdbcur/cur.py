"""Low-rank containers, stable CUR reassembly and sampled norm estimates."""
from dataclasses import dataclass

import numpy as np

from .linalg import (
    InvalidInputError,
    SvdFactors,
    _fix_signs,
    orthonormal_complement,
    pseudo_solve,
    random_orthonormal,
    thin_svd,
)
from .selection import deim

__all__ = [
    "LowRankState",
    "LowRankMatrix",
    "DenseAccessor",
    "FunctionAccessor",
    "ZeroAccessor",
    "as_accessor",
    "CurDiagnostics",
    "InconsistentSamplesError",
    "stable_cur",
    "cur_diagnostics",
    "lowrank_norm_estimate",
]


class InconsistentSamplesError(ValueError):
    """Sampled rows and columns disagree on their intersection."""


@dataclass(frozen=True)
class LowRankState:
    """Rank-``r`` matrix ``U @ diag(S) @ Y.T`` with orthonormal ``U``, ``Y``."""

    U: np.ndarray
    S: np.ndarray
    Y: np.ndarray

    @property
    def rank(self):
        return self.S.shape[0]

    @property
    def shape(self):
        return (self.U.shape[0], self.Y.shape[0])

    @property
    def factors(self):
        return SvdFactors(self.U, self.S, self.Y)

    @classmethod
    def from_factors(cls, f: SvdFactors):
        return cls(f.left, f.sigma, f.right)

    @classmethod
    def from_matrix(cls, X, rank):
        f = thin_svd(X)
        rank = min(rank, f.rank)
        return cls(f.left[:, :rank].copy(), f.sigma[:rank].copy(), f.right[:, :rank].copy())

    def cols(self, q):
        return (self.U * self.S) @ self.Y[q].T

    def rows(self, p):
        return (self.U[p] * self.S) @ self.Y.T

    def to_dense(self):
        return (self.U * self.S) @ self.Y.T

    def fro_norm(self):
        return float(np.linalg.norm(self.S))

    def as_lowrank(self):
        return LowRankMatrix(self.U * self.S, self.Y)


@dataclass(frozen=True)
class LowRankMatrix:
    """Matrix stored as ``left @ right.T`` without any orthogonality."""

    left: np.ndarray
    right: np.ndarray

    @property
    def shape(self):
        return (self.left.shape[0], self.right.shape[0])

    def cols(self, q):
        return self.left @ self.right[q].T

    def rows(self, p):
        return self.left[p] @ self.right.T

    def to_dense(self):
        return self.left @ self.right.T

    def scaled(self, c):
        return LowRankMatrix(c * self.left, self.right)

    @staticmethod
    def combine(terms):
        """Sum of ``coef * M`` for ``(coef, M)`` pairs, ``M`` a LowRankState or LowRankMatrix."""
        lefts, rights = [], []
        for c, M in terms:
            if isinstance(M, LowRankState):
                M = M.as_lowrank()
            lefts.append(c * M.left)
            rights.append(M.right)
        return LowRankMatrix(np.hstack(lefts), np.hstack(rights))

    def _core(self):
        QL, RL = np.linalg.qr(self.left)
        QR, RR = np.linalg.qr(self.right)
        return QL, RL @ RR.T, QR

    def fro_norm(self):
        return float(np.linalg.norm(self._core()[1]))

    def compress(self, rank=None, rtol=0.0):
        """Recompress to SVD form, truncated at ``rank`` and/or relative ``rtol``."""
        QL, core, QR = self._core()
        f = thin_svd(core)
        k = f.rank if rank is None else min(rank, f.rank)
        if rtol > 0 and f.sigma.size and f.sigma[0] > 0:
            k = min(k, max(1, int(np.sum(f.sigma > rtol * f.sigma[0]))))
        U, Yt = _fix_signs(QL @ f.left[:, :k], (QR @ f.right[:, :k]).T)
        return LowRankState(U, f.sigma[:k].copy(), Yt.T.copy())


class DenseAccessor:
    def __init__(self, X):
        self.X = np.asarray(X, dtype=float)

    @property
    def shape(self):
        return self.X.shape

    def cols(self, q):
        return self.X[:, q]

    def rows(self, p):
        return self.X[p, :]

    def to_dense(self):
        return self.X

    def fro_norm(self):
        return float(np.linalg.norm(self.X))


class ZeroAccessor:
    def __init__(self, shape):
        self.shape = tuple(shape)

    def cols(self, q):
        return np.zeros((self.shape[0], len(q)))

    def rows(self, p):
        return np.zeros((len(p), self.shape[1]))

    def to_dense(self):
        return np.zeros(self.shape)

    def fro_norm(self):
        return 0.0


class FunctionAccessor:
    """Matrix known only through row and column evaluation callbacks."""

    def __init__(self, shape, cols, rows, dense=None):
        self.shape = tuple(shape)
        self._cols = cols
        self._rows = rows
        self._dense = dense

    def cols(self, q):
        return self._cols(np.asarray(q, dtype=np.intp))

    def rows(self, p):
        return self._rows(np.asarray(p, dtype=np.intp))

    def to_dense(self):
        if self._dense is not None:
            return self._dense()
        return self.cols(np.arange(self.shape[1]))


def as_accessor(obj, shape=None):
    if obj is None:
        return ZeroAccessor(shape)
    if isinstance(obj, np.ndarray):
        return DenseAccessor(obj)
    if hasattr(obj, "cols") and hasattr(obj, "rows"):
        return obj
    return DenseAccessor(np.asarray(obj, dtype=float))


def stable_cur(cols, rows, p, q, intersection=None, rtol=1e-8) -> LowRankState:
    """Rank-``r`` SVD-form reassembly from sampled columns ``X[:, q]`` and rows ``X[p, :]``.

    The core ``pinv(Uq[p]) @ X[p, q] @ pinv(Yp[q]).T`` is diagonalised and
    rotated back into the column and row subspaces.  Unless an explicit
    ``intersection`` is given, ``cols[p]`` and ``rows[:, q]`` must agree to
    ``rtol`` relative; otherwise :class:`InconsistentSamplesError` is raised.
    """
    cols = np.asarray(cols, dtype=float)
    rows = np.asarray(rows, dtype=float)
    p = np.asarray(p, dtype=np.intp)
    q = np.asarray(q, dtype=np.intp)
    if cols.shape[1] != q.size or rows.shape[0] != p.size:
        raise InvalidInputError("stable_cur: sample shapes do not match index sets")
    if intersection is None:
        a, b = cols[p], rows[:, q]
        scale = max(np.linalg.norm(a), np.linalg.norm(b))
        if np.linalg.norm(a - b) > rtol * scale:
            raise InconsistentSamplesError(
                f"stable_cur: row/column samples disagree on X[p, q] "
                f"(relative mismatch {np.linalg.norm(a - b) / scale:.3e})"
            )
        Xpq = 0.5 * (a + b)
    else:
        Xpq = np.asarray(intersection, dtype=float)
    Uq = thin_svd(cols).left
    Yp = thin_svd(rows).right
    T = pseudo_solve(Uq[p], Xpq)
    core = pseudo_solve(Yp[q], T.T).T
    f = thin_svd(core)
    U, Yt = _fix_signs(Uq @ f.left, (Yp @ f.right).T)
    return LowRankState(U, f.sigma, Yt.T.copy())


@dataclass(frozen=True)
class CurDiagnostics:
    eta_r: float
    eta_c: float
    c_bound: float


def cur_diagnostics(U, Y, p, q) -> CurDiagnostics:
    """Interpolation constants ``||U[p]^-1||_2``, ``||Y[q]^-1||_2`` and the CUR-DEIM factor."""

    def inv_norm(M, name):
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] <= s[0] * np.finfo(float).eps * max(M.shape):
            raise np.linalg.LinAlgError(f"cur_diagnostics: {name} submatrix is singular")
        return 1.0 / s[-1]

    eta_r = inv_norm(np.asarray(U)[p], "row")
    eta_c = inv_norm(np.asarray(Y)[q], "column")
    return CurDiagnostics(eta_r, eta_c, min(eta_r * (1 + eta_c), eta_c * (1 + eta_r)))


def _basis(B, n, k, rng):
    if B is None or B.shape[1] == 0:
        return random_orthonormal(n, k, rng)
    if B.shape[1] >= k:
        return B[:, :k]
    return np.hstack([B, orthonormal_complement(B, k - B.shape[1], rng)])


def lowrank_norm_estimate(sampler, prev_basis=None, rank_est=5, rng=None, grow_ratio=1e-2):
    """Sampled CUR estimate of ``||M||_F`` for a matrix available via ``cols``/``rows``.

    Rows and columns are chosen by DEIM on ``prev_basis`` (a LowRankState or
    SvdFactors from the previous estimate; random orthonormal when absent).
    The sample count starts at ``rank_est`` and doubles while the smallest
    captured singular value exceeds ``grow_ratio`` times the largest.

    Returns ``(state, norm)``.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    n1, n2 = sampler.shape
    kmax = min(n1, n2)
    k = max(1, min(rank_est, kmax))
    if isinstance(prev_basis, SvdFactors):
        Ub, Yb = prev_basis.left, prev_basis.right
    elif prev_basis is not None:
        Ub, Yb = prev_basis.U, prev_basis.Y
    else:
        Ub = Yb = None
    while True:
        U = _basis(Ub, n1, k, rng)
        Y = _basis(Yb, n2, k, rng)
        p = deim(U)
        q = deim(Y)
        cols = sampler.cols(q)
        rows = sampler.rows(p)
        state = stable_cur(cols, rows, p, q, intersection=0.5 * (cols[p] + rows[:, q]))
        s = state.S
        if k >= kmax or s[0] == 0.0 or s[-1] <= grow_ratio * s[0]:
            return state, float(np.linalg.norm(s))
        Ub, Yb = state.U, state.Y
        k = min(2 * k, kmax)
