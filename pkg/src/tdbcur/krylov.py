"""Restarted GMRES on spaces of matrices with the Frobenius inner product."""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_triangular

from .linalg import InvalidInputError

__all__ = ["LinearMatrixOperator", "apply_operator", "GmresStats", "gmres_lme", "lmul", "rmul"]


def lmul(A, X):
    """``A @ X`` for ``A`` sparse, dense or ``None`` (identity)."""
    if A is None:
        return X
    return np.asarray(A @ X)


def rmul(X, B):
    """``X @ B`` for ``B`` sparse, dense or ``None`` (identity)."""
    if B is None:
        return X
    if sp.issparse(B):
        return np.asarray((B.T @ X.T).T)
    return X @ B


def _cols(M):
    return M.shape[1]


class LinearMatrixOperator:
    """``X -> A0 @ X @ B0 - dt * (sum_i Ai @ X @ Bi + E * X)``.

    ``mass`` is ``(A0, B0)`` or ``None``; without a mass pair the leading
    term is dropped entirely (steady form, use ``dt=-1``).  Entries of a pair
    may be ``None`` for identity.  ``hadamard`` is a dense array of the
    operand's shape or ``None``.
    """

    def __init__(self, terms, mass=None, hadamard=None, dt=1.0):
        self.terms = [tuple(t) for t in terms]
        self.mass = None if mass is None else tuple(mass)
        self.hadamard = None if hadamard is None else np.asarray(hadamard, dtype=float)
        self.dt = float(dt)
        if not self.terms and self.hadamard is None and self.mass is None:
            raise InvalidInputError("operator needs at least one term")
        self._groups = self._group()

    def _group(self):
        weighted = []
        if self.mass is not None:
            weighted.append((self.mass[0], self.mass[1], 1.0))
        weighted.extend((A, B, -self.dt) for A, B in self.terms)
        # merge terms sharing a sparse/identity factor so it is applied once
        left_groups, right_groups, rest = {}, {}, []
        for A, B, c in weighted:
            a_small = A is not None and not sp.issparse(A)
            b_small = B is not None and not sp.issparse(B)
            if b_small and not a_small:
                left_groups.setdefault(id(A), [A, []])[1].append(c * B)
            elif a_small and not b_small:
                right_groups.setdefault(id(B), [B, []])[1].append(c * A)
            else:
                rest.append((A, B, c))
        groups = [("L", A, sum(Bs[1:], Bs[0])) for A, Bs in left_groups.values()]
        groups += [("R", B, sum(As[1:], As[0])) for B, As in right_groups.values()]
        groups += [("G", A, B, c) for A, B, c in rest]
        return groups

    def __call__(self, X):
        out = None
        for g in self._groups:
            if g[0] == "L":
                y = lmul(g[1], X @ g[2])
            elif g[0] == "R":
                y = rmul(g[2] @ X, g[1])
            else:
                y = g[3] * rmul(lmul(g[1], X), g[2])
            out = y if out is None else out + y
        if self.hadamard is not None:
            y = -self.dt * (self.hadamard * X)
            out = y if out is None else out + y
        return out


def apply_operator(op: LinearMatrixOperator, X):
    X = np.asarray(X, dtype=float)
    if op.hadamard is not None and op.hadamard.shape != X.shape:
        raise InvalidInputError(f"hadamard shape {op.hadamard.shape} does not match operand {X.shape}")
    for A, B in ([op.mass] if op.mass is not None else []) + op.terms:
        if (A is not None and _cols(A) != X.shape[0]) or (B is not None and B.shape[0] != X.shape[1]):
            raise InvalidInputError(f"operator term not conformal with operand of shape {X.shape}")
    return op(X)


@dataclass
class GmresStats:
    iterations: int = 0
    restarts: int = 0
    converged: bool = False
    residual_norm: float = 0.0
    rhs_norm: float = 0.0
    max_basis: int = 0
    stagnated: bool = False
    orth_error: float = 0.0
    history: list = field(default_factory=list)


def gmres_lme(op, rhs, x0=None, m=30, tol=1e-12, max_restarts=10_000, atol=0.0, reorth=0.7, stall_window=25, check_orth=False):
    """Restarted GMRES for ``op(X) = rhs`` over matrices of ``rhs``'s shape.

    Krylov vectors are matrices orthonormalised under the Frobenius inner
    product by modified Gram-Schmidt, with a second pass whenever the norm
    drops below ``reorth`` times its value before orthogonalisation.  The
    small least-squares problem is updated with Givens rotations.

    Stops when ``||rhs - op(X)||_F <= max(tol * ||rhs||_F, atol)``.  After
    ``max_restarts`` restarts the latest iterate is returned with
    ``stats.converged = False``.  The same happens early (with
    ``stats.stagnated = True``) when ``stall_window`` consecutive cycles
    reduce the true residual by less than 1% in total, which is what
    rounding does once the residual sits at its attainable floor.

    Returns ``(X, GmresStats)``.  ``stats.history`` holds the true residual
    at the start of each cycle followed by the rotated least-squares
    residual after every Arnoldi step.  With ``check_orth`` the largest
    deviation ``|<Q_i, Q_j> - delta_ij|`` of each cycle's basis is kept in
    ``stats.orth_error``.
    """
    rhs = np.asarray(rhs, dtype=float)
    shape = rhs.shape
    b = float(np.linalg.norm(rhs))
    stats = GmresStats(rhs_norm=b)
    X = np.zeros(shape) if x0 is None else np.array(x0, dtype=float, copy=True).reshape(shape)
    if b == 0.0 and atol == 0.0:
        stats.converged = True
        return np.zeros(shape), stats
    target = max(tol * b, atol)
    m = max(1, int(m))
    N = rhs.size
    cycles = 0
    starts = []
    while True:
        R = rhs - op(X)
        beta = float(np.linalg.norm(R))
        stats.history.append(beta)
        stats.residual_norm = beta
        if beta <= target:
            stats.converged = True
            break
        if cycles > max_restarts:
            break
        starts.append(beta)
        if stall_window and len(starts) > stall_window and beta > 0.99 * starts[-1 - stall_window]:
            stats.stagnated = True
            break
        V = np.empty((m + 1, N))
        V[0] = R.ravel() / beta
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        k = 0
        filled = 1
        for j in range(m):
            w = op(V[j].reshape(shape)).ravel()
            pre = np.linalg.norm(w)
            for i in range(j + 1):
                h = V[i] @ w
                H[i, j] = h
                w -= h * V[i]
            hn = np.linalg.norm(w)
            if hn < reorth * pre:
                for i in range(j + 1):
                    h = V[i] @ w
                    H[i, j] += h
                    w -= h * V[i]
                hn = np.linalg.norm(w)
            H[j + 1, j] = hn
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            d = np.hypot(H[j, j], H[j + 1, j])
            if d == 0.0:
                k = j
                break
            cs[j] = H[j, j] / d
            sn[j] = H[j + 1, j] / d
            H[j, j] = d
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            stats.iterations += 1
            stats.history.append(abs(g[j + 1]))
            stats.max_basis = max(stats.max_basis, j + 2)
            if hn <= 1e-14 * b or abs(g[j + 1]) <= target:
                break
            V[j + 1] = w / hn
            filled += 1
        if check_orth and k > 0:
            G = V[:filled] @ V[:filled].T
            nb = filled
            stats.orth_error = max(stats.orth_error, float(np.max(np.abs(G - np.eye(nb)))))
        if k > 0:
            y = solve_triangular(H[:k, :k], g[:k])
            X = X + (y @ V[:k]).reshape(shape)
        cycles += 1
        stats.restarts = cycles - 1
    stats.restarts = max(0, cycles - 1)
    return X, stats
