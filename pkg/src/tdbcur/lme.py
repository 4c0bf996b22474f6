"""Linear matrix equation containers.

An :class:`LMEProblem` holds the coefficient data of

    A0 dX/dt B0 = sum_i Ai X Bi + E o X - C          (transient)
    sum_i Ai X Bi + E o X = C                         (steady)

and a :class:`StepEquation` is one implicit solve

    [A0 X B0] - dt * (sum_i Ai X Bi + E o X) = rhs

built from it (time step, pseudo-time step or the plain steady equation,
which uses no mass pair and ``dt = -1``).
"""
import numpy as np
import scipy.sparse as sp

from .cur import LowRankMatrix, LowRankState, as_accessor, lowrank_norm_estimate
from .krylov import lmul
from .linalg import InvalidInputError, as_csr

__all__ = ["LMEProblem", "StepEquation", "SumAccessor", "HadamardAccessor", "lowrank_apply"]


def _prep(M):
    return None if M is None else as_csr(M)


def _t(M):
    return None if M is None else as_csr(M.T)


class LMEProblem:
    """Coefficient data of a multi-term linear matrix equation.

    Parameters
    ----------
    terms : list of (A_i, B_i)
        Sparse coefficient pairs, ``A_i`` is ``n1 x n1``, ``B_i`` is ``n2 x n2``.
    rhs : ndarray, LowRankMatrix, accessor or None
        The matrix ``C``; anything with ``cols``/``rows`` methods works.
    mass : (A0, B0) or None
        Mass pair multiplying the time derivative (``None`` = identity).
    hadamard : ndarray, accessor or None
        Elementwise coefficient ``E``.
    """

    def __init__(self, terms, rhs=None, mass=None, hadamard=None, shape=None):
        self.terms = [(_prep(A), _prep(B)) for A, B in terms]
        self.mass = None if mass is None else (_prep(mass[0]), _prep(mass[1]))
        if shape is None:
            A, B = self.terms[0] if self.terms else self.mass
            shape = (A.shape[0], B.shape[0])
        self.shape = tuple(shape)
        for A, B in self.terms + ([self.mass] if self.mass else []):
            if (A is not None and A.shape != (self.shape[0],) * 2) or (
                B is not None and B.shape != (self.shape[1],) * 2
            ):
                raise InvalidInputError("coefficient matrices not conformal with the unknown")
        self.rhs = as_accessor(rhs, self.shape)
        self.hadamard = None if hadamard is None else as_accessor(hadamard, self.shape)
        # transposes give row supports of A and column slices of B cheaply
        self.terms_t = [(_t(A), _t(B)) for A, B in self.terms]
        self.mass_t = None if self.mass is None else (_t(self.mass[0]), _t(self.mass[1]))

    @property
    def d(self):
        return len(self.terms)

    def with_hadamard(self, hadamard):
        out = LMEProblem.__new__(LMEProblem)
        out.__dict__.update(self.__dict__)
        out.hadamard = None if hadamard is None else as_accessor(hadamard, self.shape)
        return out

    def with_rhs(self, rhs):
        out = LMEProblem.__new__(LMEProblem)
        out.__dict__.update(self.__dict__)
        out.rhs = as_accessor(rhs, self.shape)
        return out

    def steady_residual(self, X):
        """Accessor for ``sum_i Ai X Bi + E o X - C`` at a low-rank ``X``."""
        return SumAccessor(
            [(1.0, lowrank_apply(self.terms, X)), (1.0, HadamardAccessor(self.hadamard, X)), (-1.0, self.rhs)],
            self.shape,
        )

    def steady_equation(self):
        return StepEquation(self, dt=-1.0, mass=None, rhs=self.rhs)

    def pseudo_time_equation(self, X_prev, dtau):
        """Implicit Euler step of ``dX/dtau = sum_i Ai X Bi + E o X - C`` (identity mass)."""
        rhs = SumAccessor([(1.0, X_prev), (-dtau, self.rhs)], self.shape)
        return StepEquation(self, dt=dtau, mass=(None, None), rhs=rhs)


def lowrank_apply(pairs, X, coefs=None):
    """``sum_i c_i A_i X B_i`` for low-rank ``X`` as a LowRankMatrix."""
    if isinstance(X, LowRankState):
        X = X.as_lowrank()
    coefs = [1.0] * len(pairs) if coefs is None else coefs
    if not pairs:
        return None
    lefts = [c * lmul(A, X.left) for (A, _), c in zip(pairs, coefs)]
    rights = [X.right if B is None else np.asarray(B.T @ X.right) for _, B in pairs]
    return LowRankMatrix(np.hstack(lefts), np.hstack(rights))


class HadamardAccessor:
    """``E o X`` evaluated only on requested rows/columns."""

    def __init__(self, E, X):
        self.E = E
        self.X = X

    def cols(self, q):
        return self.E.cols(q) * self.X.cols(q)

    def rows(self, p):
        return self.E.rows(p) * self.X.rows(p)


class SumAccessor:
    """Linear combination of accessors; ``None`` members are skipped."""

    def __init__(self, parts, shape):
        self.parts = [(c, M) for c, M in parts if M is not None and not (isinstance(M, HadamardAccessor) and M.E is None)]
        self.shape = tuple(shape)

    def cols(self, q):
        out = np.zeros((self.shape[0], len(q)))
        for c, M in self.parts:
            out += c * M.cols(q)
        return out

    def rows(self, p):
        out = np.zeros((len(p), self.shape[1]))
        for c, M in self.parts:
            out += c * M.rows(p)
        return out

    def to_dense(self):
        return self.cols(np.arange(self.shape[1]))


class StepEquation:
    """``[A0 X B0] - dt * (sum_i Ai X Bi + E o X) = rhs`` for one implicit solve.

    ``mass=None`` drops the leading term (steady form, used with ``dt=-1``);
    ``mass=(None, None)`` means identity mass.  ``rhs`` is an accessor.
    """

    def __init__(self, problem: LMEProblem, dt, rhs, mass="problem"):
        self.problem = problem
        self.dt = float(dt)
        self.shape = problem.shape
        if isinstance(mass, str):
            self.mass = problem.mass if problem.mass is not None else (None, None)
            self.mass_t = problem.mass_t if problem.mass is not None else (None, None)
        elif mass is None:
            self.mass = self.mass_t = None
        else:
            self.mass = (_prep(mass[0]), _prep(mass[1]))
            self.mass_t = (_t(mass[0]), _t(mass[1]))
        self.rhs = as_accessor(rhs, self.shape)
        self._rhs_norm = None

    @property
    def terms(self):
        return self.problem.terms

    @property
    def hadamard(self):
        return self.problem.hadamard

    def all_pairs(self):
        """``(pairs, transposed pairs, coefficients)`` including the mass pair."""
        pairs, tpairs, coefs = [], [], []
        if self.mass is not None:
            pairs.append(self.mass)
            tpairs.append(self.mass_t)
            coefs.append(1.0)
        pairs += self.terms
        tpairs += self.problem.terms_t
        coefs += [-self.dt] * len(self.terms)
        return pairs, tpairs, coefs

    def apply_lowrank(self, X):
        """Accessor for ``op(X)`` with ``X`` low-rank."""
        pairs, _, coefs = self.all_pairs()
        return SumAccessor(
            [(1.0, lowrank_apply(pairs, X, coefs)), (-self.dt, HadamardAccessor(self.hadamard, X))],
            self.shape,
        )

    def residual(self, X):
        """Accessor for ``op(X) - rhs``."""
        return SumAccessor([(1.0, self.apply_lowrank(X)), (-1.0, self.rhs)], self.shape)

    def rhs_norm(self, rank_est=10, rng=None):
        if self._rhs_norm is None:
            if hasattr(self.rhs, "fro_norm"):
                self._rhs_norm = self.rhs.fro_norm()
            else:
                rng = np.random.default_rng(12345) if rng is None else rng
                self._rhs_norm = lowrank_norm_estimate(self.rhs, None, rank_est, rng)[1]
        return self._rhs_norm
