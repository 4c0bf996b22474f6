"""Dense full-order reference solutions.

Vectorisation stacks columns: ``vec(A X B) = (B^T kron A) vec(X)`` and
``vec(X) = X.ravel(order="F")``.  Everything here forms dense
``n1*n2 x n1*n2`` matrices and is meant for validation at small sizes.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from .cur import LowRankMatrix, LowRankState
from .linalg import thin_svd
from .problems import bdf_march, time_discretize

__all__ = [
    "DenseCapError",
    "KroneckerSystem",
    "vec",
    "mat",
    "dense_of",
    "kron_assemble",
    "kron_operator",
    "fom_solve",
    "best_rank_r",
    "fom_newton",
    "fom_integrate",
    "modal_heat_solution",
    "dense_lyapunov",
]

DENSE_CAP = 40_000


class DenseCapError(MemoryError):
    pass


@dataclass
class KroneckerSystem:
    A: np.ndarray
    b: np.ndarray
    shape: tuple

    def solve(self):
        x = scipy.linalg.solve(self.A, self.b)
        return mat(x, self.shape)


def vec(X):
    return np.asarray(X).ravel(order="F")


def mat(x, shape):
    return np.asarray(x).reshape(shape, order="F")


def dense_of(M, n):
    """Dense copy of a coefficient (``None`` means the ``n x n`` identity)."""
    if M is None:
        return np.eye(n)
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)


def _check_cap(n1, n2, cap):
    if n1 * n2 > cap:
        raise DenseCapError(f"dense oracle refused: n1*n2 = {n1 * n2} exceeds cap {cap}")


def kron_operator(terms, shape, mass=None, hadamard=None, dt=1.0, cap=DENSE_CAP):
    """``B0^T kron A0 - dt (sum_i Bi^T kron Ai + diag(vec E))``; no mass term when ``mass`` is None."""
    n1, n2 = shape
    _check_cap(n1, n2, cap)
    N = n1 * n2
    A = np.zeros((N, N))
    if mass is not None:
        A += np.kron(dense_of(mass[1], n2).T, dense_of(mass[0], n1))
    for Ai, Bi in terms:
        A -= dt * np.kron(dense_of(Bi, n2).T, dense_of(Ai, n1))
    if hadamard is not None:
        A[np.diag_indices(N)] -= dt * vec(hadamard)
    return A


def _dense_rhs(rhs, shape):
    if rhs is None:
        return np.zeros(shape)
    if hasattr(rhs, "to_dense"):
        return np.asarray(rhs.to_dense(), dtype=float)
    return np.asarray(rhs, dtype=float)


def kron_assemble(eq, cap=DENSE_CAP) -> KroneckerSystem:
    """Dense system for a :class:`~tdbcur.lme.StepEquation` (or anything with the same fields)."""
    n1, n2 = eq.shape
    _check_cap(n1, n2, cap)
    E = None if eq.hadamard is None else _dense_rhs(eq.hadamard, eq.shape)
    A = kron_operator(eq.terms, eq.shape, eq.mass, E, eq.dt, cap)
    return KroneckerSystem(A, vec(_dense_rhs(eq.rhs, eq.shape)), tuple(eq.shape))


def fom_solve(eq, cap=DENSE_CAP):
    """Direct dense solve of a step equation; raises ``LinAlgError`` if singular."""
    sysm = kron_assemble(eq, cap)
    with np.errstate(all="ignore"):
        X = sysm.solve()
        res = np.linalg.norm(sysm.A @ vec(X) - sysm.b)
        scale = np.linalg.norm(sysm.A, 1) * np.linalg.norm(vec(X)) + np.linalg.norm(sysm.b)
    if not np.isfinite(res) or res > 1e-10 * max(scale, 1e-300):
        raise np.linalg.LinAlgError(f"fom_solve: residual {res:.3e} too large, system nearly singular")
    return X


def best_rank_r(X, r) -> LowRankState:
    """Eckart-Young truncation of ``X`` to rank ``r``."""
    f = thin_svd(np.asarray(X, dtype=float))
    r = min(r, f.rank)
    return LowRankState(f.left[:, :r].copy(), f.sigma[:r].copy(), f.right[:, :r].copy())


def fom_newton(problem, X0, tol=1e-12, max_iters=30, cap=DENSE_CAP):
    """Dense Newton for a :class:`~tdbcur.problems.RadiationProblem`.

    Returns ``(X, deltas)``.  Stops at ``||dX|| <= tol``, after one step
    when the emissivity is zero (linear problem), or once the
    corrections stop decreasing (rounding floor).  Raises ``RuntimeError``
    with the trace attached if ``||dX||`` grows three iterations in a row
    and exceeds ten times its best value.
    """
    n1, n2 = problem.shape
    _check_cap(n1, n2, cap)
    X = _dense_rhs(X0, (n1, n2)).copy()
    K = kron_operator(problem.base.terms, (n1, n2), dt=-1.0, cap=cap)
    G = problem.G.to_dense()
    Cb = problem.C_b.to_dense()
    es = problem.emissivity * problem.sigma
    deltas = []
    for _ in range(max_iters):
        R = mat(K @ vec(X), (n1, n2)) - es * G * (X**4 - problem.T_inf**4) - Cb
        J = K.copy()
        J[np.diag_indices(n1 * n2)] -= 4 * es * vec(G * X**3)
        dX = mat(scipy.linalg.solve(J, -vec(R)), (n1, n2))
        X = X + dX
        deltas.append(float(np.linalg.norm(dX)))
        if deltas[-1] <= tol or es == 0.0:
            # without radiation the problem is linear and one step is exact
            break
        if len(deltas) >= 4 and deltas[-1] > deltas[-2] > deltas[-3] > deltas[-4] and deltas[-1] > 10 * min(deltas):
            err = RuntimeError("fom_newton diverging")
            err.trace = deltas
            raise err
        if len(deltas) >= 2 and deltas[-1] > 0.5 * deltas[-2] and deltas[-1] < 1e-8 * np.linalg.norm(X):
            break
    return X, deltas


def fom_integrate(problem, X0, scheme, dt, n_steps, bootstrap="extrapolated", cap=DENSE_CAP):
    """Dense BDF time stepping of ``A0 dX/dt B0 = sum_i Ai X Bi - C``.

    Builds the same step equations as the low-rank driver and solves each
    one directly.  Returns the list of states ``[X^0, ..., X^n]``.
    """

    def step(sch, h, hist):
        hist = [LowRankMatrix(S, np.eye(S.shape[1])) for S in hist]
        return fom_solve(time_discretize(problem, sch, h, hist), cap)

    X0 = _dense_rhs(X0, problem.shape)
    return bdf_march(step, lambda f, c: 2 * f - c, X0, scheme, dt, n_steps, bootstrap)


def modal_heat_solution(problem, X0, t):
    """Exact semi-discrete solution of ``A0 dX/dt B0 = A1 X B1 + A2 X B2 - C`` at time ``t``.

    Requires the heat structure ``(A1, B1) = (-Kr, Mc)``, ``(A2, B2) = (Mr, -Kc)``
    with ``A0 = a Mr``, ``B0 = Mc`` (symmetric, ``Mr``/``Mc`` positive
    definite).  Solved in the joint eigenbasis of ``(Kr, Mr)`` and ``(Kc, Mc)``.
    """
    (A0, B0) = problem.mass
    (A1, B1), (A2, B2) = problem.terms
    Mr, Mc = A2.toarray(), B1.toarray()
    Kr, Kc = -A1.toarray(), -B2.toarray()
    a = float(A0.toarray()[0, 0] / Mr[0, 0])
    lr, Vr = scipy.linalg.eigh(Kr, Mr)
    lc, Vc = scipy.linalg.eigh(Kc, Mc)
    # X = Vr Z Vc^T, Vr^T Mr Vr = I: a dZ/dt = -(lr_i + lc_j) Z - Vr^T C Vc
    C = _dense_rhs(problem.rhs, problem.shape)
    F = -(Vr.T @ C @ Vc)
    Z0 = Vr.T @ Mr @ _dense_rhs(X0, problem.shape) @ Mc @ Vc
    lam = (lr[:, None] + lc[None, :]) / a
    Zinf = F / (a * lam)
    Z = Zinf + (Z0 - Zinf) * np.exp(-lam * t)
    return Vr @ Z @ Vc.T


def dense_lyapunov(problem):
    """Dense solve of ``K X M + M X K = -g g^T`` via the generalised eigenbasis of ``(K, M)``."""
    (A1, B1), (A2, B2) = problem.terms
    K, M = A1.toarray(), B1.toarray()
    lam, V = scipy.linalg.eigh(K, M)
    C = _dense_rhs(problem.rhs, problem.shape)
    # X = V Z V^T: lam_i Z_ij + lam_j Z_ij = V^T C V (with V^T M V = I)
    W = V.T @ C @ V
    Z = W / (lam[:, None] + lam[None, :])
    return V @ Z @ V.T
