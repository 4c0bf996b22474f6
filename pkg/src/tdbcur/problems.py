"""Finite-element test problems on structured tensor-product grids.

Every generator returns interior-only coefficient data: Dirichlet nodes are
eliminated and their known values enter the right-hand side through the
interior/boundary coupling blocks.  Stiffness matrices are assembled
positive semidefinite and negated where the physics needs decay.

Grid ordering for 2-D node sets is ``ix * ny + iy``, so 2-D operators are
``kron(Mx, My)`` style products of 1-D factors.
"""
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .cur import FunctionAccessor, LowRankMatrix, LowRankState
from .io import write_matrix_market
from .linalg import InvalidInputError
from .lme import LMEProblem, StepEquation, SumAccessor, lowrank_apply

__all__ = [
    "Fem1D",
    "BoundaryPartition",
    "HeatProblem",
    "RadiationProblem",
    "fem_1d",
    "fem_2d",
    "assemble_heat_mde",
    "time_discretize",
    "scheme_coefficients",
    "bdf_march",
    "assemble_lyapunov",
    "assemble_radiation",
    "export_problem",
]

STEFAN_BOLTZMANN = 5.67e-8


@dataclass(frozen=True)
class Fem1D:
    n_nodes: int
    h: float
    M: sp.csr_matrix
    K: sp.csr_matrix


@dataclass(frozen=True)
class BoundaryPartition:
    """Interior index sets for rows (``i_xy``) and columns (``i_z``) of the full grid."""

    i_xy: np.ndarray
    i_z: np.ndarray
    b_xy: np.ndarray
    b_z: np.ndarray
    value: float


def fem_1d(n_elements, length=1.0) -> Fem1D:
    """P1 mass and stiffness matrices on a uniform 1-D grid (all nodes)."""
    if n_elements < 2:
        raise InvalidInputError("fem_1d needs at least 2 elements")
    n = n_elements + 1
    h = length / n_elements
    main = np.full(n, 2.0)
    main[[0, -1]] = 1.0
    off = np.ones(n - 1)
    K = sp.diags([-off, main, -off], [-1, 0, 1], format="csr") / h
    M = sp.diags([off, 2 * main, off], [-1, 0, 1], format="csr") * (h / 6)
    return Fem1D(n, h, M.tocsr(), K.tocsr())


def fem_2d(fx: Fem1D, fy: Fem1D):
    """Tensor-product mass and stiffness ``(Mx (x) My, Kx (x) My + Mx (x) Ky)``."""
    M = sp.kron(fx.M, fy.M, format="csr")
    K = (sp.kron(fx.K, fy.M) + sp.kron(fx.M, fy.K)).tocsr()
    return M, K


def _grid_nodes(n_nodes):
    n = int(n_nodes)
    if n < 3:
        raise InvalidInputError("grid needs at least 3 nodes per direction")
    return n


def _split(n, interior_mask):
    idx = np.arange(n)
    return idx[interior_mask], idx[~interior_mask]


def _boundary_rhs(pairs, part: BoundaryPartition, n_xy, n_z):
    """``sum_i A_i[i, :] Xb B_i[:, i]`` for ``Xb`` equal to ``value`` on Dirichlet nodes.

    ``Xb = value * (1 1^T - 1_int 1_int^T)`` on the full grid, so the
    coupling is returned as a low-rank matrix.
    """
    ones_xy, ones_z = np.ones(n_xy), np.ones(n_z)
    int_xy = np.zeros(n_xy)
    int_xy[part.i_xy] = 1.0
    int_z = np.zeros(n_z)
    int_z[part.i_z] = 1.0
    lefts, rights = [], []
    for A, B in pairs:
        for c, a, b in ((1.0, ones_xy, ones_z), (-1.0, int_xy, int_z)):
            lefts.append(c * part.value * np.asarray(A @ a)[part.i_xy])
            rights.append(np.asarray(B.T @ b)[part.i_z])
    return LowRankMatrix(np.column_stack(lefts), np.column_stack(rights))


def _restrict(M, rows, cols=None):
    cols = rows if cols is None else cols
    return M[rows][:, cols].tocsr()


@dataclass
class HeatProblem:
    problem: LMEProblem
    partition: BoundaryPartition
    X0: LowRankState
    full: dict


def assemble_heat_mde(
    nx=21,
    ny=17,
    nz=None,
    rho=1.0,
    cp=1.0,
    k=1.0,
    source=10.0,
    T0=0.5,
    boundary_value=None,
    lengths=(2.0, 1.25, 1.0),
) -> HeatProblem:
    """Transient heat conduction with a uniform source and Dirichlet walls.

    With ``nz`` given the unknown is the 3-D field matricised as
    ``(xy nodes) x (z nodes)``; otherwise it is the 2-D field as
    ``x nodes x y nodes``.  Interior form::

        rho cp Mr dX/dt Mc = -k Kr X Mc - k Mr X Kc + Q - (boundary coupling)

    i.e. ``A0 = rho cp Mr``, ``B0 = Mc``, ``(A1, B1) = (-k Kr, Mc)``,
    ``(A2, B2) = (Mr, -k Kc)`` and ``C`` collects the load and the
    Dirichlet coupling with a minus sign.
    """
    boundary_value = T0 if boundary_value is None else boundary_value
    nx, ny = _grid_nodes(nx), _grid_nodes(ny)
    fx = fem_1d(nx - 1, lengths[0])
    fy = fem_1d(ny - 1, lengths[1])
    if nz is None:
        Mr, Kr, Mc, Kc = fx.M, fx.K, fy.M, fy.K
        i_r, b_r = _split(nx, (np.arange(nx) > 0) & (np.arange(nx) < nx - 1))
    else:
        nz = _grid_nodes(nz)
        fc = fem_1d(nz - 1, lengths[2])
        Mr, Kr = fem_2d(fx, fy)
        Mc, Kc = fc.M, fc.K
        ix, iy = np.divmod(np.arange(nx * ny), ny)
        i_r, b_r = _split(nx * ny, (ix > 0) & (ix < nx - 1) & (iy > 0) & (iy < ny - 1))
    n_c = Mc.shape[0]
    i_c, b_c = _split(n_c, (np.arange(n_c) > 0) & (np.arange(n_c) < n_c - 1))
    part = BoundaryPartition(i_r, i_c, b_r, b_c, float(boundary_value))
    full_terms = [((-k) * Kr, Mc), (Mr, (-k) * Kc)]
    terms = [(_restrict(A, i_r), _restrict(B, i_c)) for A, B in full_terms]
    mass = (_restrict(rho * cp * Mr, i_r), _restrict(Mc, i_c))
    load_r = np.asarray(Mr @ np.ones(Mr.shape[0]))[i_r]
    load_c = np.asarray(Mc @ np.ones(n_c))[i_c]
    Q = LowRankMatrix(source * load_r[:, None], load_c[:, None])
    bnd = _boundary_rhs(full_terms, part, Mr.shape[0], n_c)
    C = LowRankMatrix.combine([(-1.0, Q), (-1.0, bnd)])
    problem = LMEProblem(terms, rhs=C, mass=mass)
    n1, n2 = len(i_r), len(i_c)
    X0 = LowRankState(
        np.ones((n1, 1)) / np.sqrt(n1), np.array([T0 * np.sqrt(n1 * n2)]), np.ones((n2, 1)) / np.sqrt(n2)
    )
    full = {"Mr": Mr, "Kr": Kr, "Mc": Mc, "Kc": Kc, "rho_cp": rho * cp, "k": k, "source": source}
    return HeatProblem(problem, part, X0, full)


def scheme_coefficients(scheme):
    """BDF coefficients ``(a_0, a_1, ..., a_s)`` with ``sum_j a_j X^{n+1-j} = dt f``."""
    table = {
        "euler": (1.0, -1.0),
        "bdf2": (1.5, -2.0, 0.5),
        "bdf3": (11 / 6, -3.0, 1.5, -1 / 3),
    }
    if scheme not in table:
        raise InvalidInputError(f"unknown scheme {scheme!r}")
    return table[scheme]


def time_discretize(problem: LMEProblem, scheme, dt, history) -> StepEquation:
    """Implicit step equation for ``A0 dX/dt B0 = sum_i Ai X Bi + E o X - C``.

    ``history`` lists previous states newest first (``X^n, X^{n-1}, ...``).
    Dividing the BDF formula by its leading coefficient ``a_0`` gives::

        A0 X B0 - (dt / a_0) (sum_i Ai X Bi + E o X) = A0 H B0 - (dt / a_0) C

    with ``H = -sum_{j>=1} (a_j / a_0) X^{n+1-j}`` kept in low-rank form.
    """
    coefs = scheme_coefficients(scheme)
    order = len(coefs) - 1
    if len(history) < order:
        raise InvalidInputError(f"{scheme} needs {order} history states, got {len(history)}")
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    a0 = coefs[0]
    dt_eff = dt / a0
    H = LowRankMatrix.combine([(-a / a0, X) for a, X in zip(coefs[1:], history)])
    mass = problem.mass if problem.mass is not None else (None, None)
    parts = [(1.0, lowrank_apply([mass], H))]
    if not _is_zero(problem.rhs):
        parts.append((-dt_eff, problem.rhs))
    if all(isinstance(M, LowRankMatrix) for _, M in parts):
        rhs = LowRankMatrix.combine(parts)
    else:
        rhs = SumAccessor(parts, problem.shape)
    return StepEquation(problem, dt_eff, rhs)


def bdf_march(step_solve, extrapolate, X0, scheme, dt, n_steps, bootstrap="extrapolated"):
    """Generic BDF time loop shared by the low-rank driver and the dense oracle.

    ``step_solve(scheme, h, history)`` returns the new state for one implicit
    step and ``extrapolate(fine, coarse)`` returns ``2 * fine - coarse``.
    Multistep schemes start with lower-order steps; with
    ``bootstrap="extrapolated"`` the first (Euler) step is replaced by the
    Richardson combination of one full and two half Euler steps so the
    start-up error does not limit BDF3 to second order.

    Returns the list of states ``[X^0, ..., X^n]``.
    """
    if bootstrap not in ("lower-order", "extrapolated"):
        raise InvalidInputError(f"unknown bootstrap {bootstrap!r}")
    order = len(scheme_coefficients(scheme)) - 1
    states = [X0]
    for n in range(n_steps):
        k = min(order, n + 1)
        if n == 0 and order > 1 and bootstrap == "extrapolated":
            coarse = step_solve("euler", dt, [X0])
            half = step_solve("euler", dt / 2, [X0])
            fine = step_solve("euler", dt / 2, [half])
            X = extrapolate(fine, coarse)
        else:
            X = step_solve(("euler", "bdf2", "bdf3")[k - 1], dt, states[::-1][:k])
        states.append(X)
    return states


def _is_zero(M):
    return type(M).__name__ == "ZeroAccessor"


def assemble_lyapunov(nx=41, ny=31, rho=780.0, cp=500.0, k=50.0, lengths=(2.0, 1.25)) -> LMEProblem:
    """Generalised Lyapunov equation from 2-D transient conduction.

    ``(-k K) X (rho cp M) + (rho cp M) X (-k K) = -g g^T`` over interior nodes,
    where ``g`` sums the columns of the interior/boundary stiffness block so
    the source has rank one.  Steady problem; use
    :meth:`LMEProblem.pseudo_time_equation` for continuation.
    """
    nx, ny = _grid_nodes(nx), _grid_nodes(ny)
    fx = fem_1d(nx - 1, lengths[0])
    fy = fem_1d(ny - 1, lengths[1])
    M, K = fem_2d(fx, fy)
    ix, iy = np.divmod(np.arange(nx * ny), ny)
    i_int, i_bnd = _split(nx * ny, (ix > 0) & (ix < nx - 1) & (iy > 0) & (iy < ny - 1))
    Kii = (-k) * _restrict(K, i_int)
    Mii = rho * cp * _restrict(M, i_int)
    g = np.asarray(((-k) * _restrict(K, i_int, i_bnd)).sum(axis=1)).ravel()
    C = LowRankMatrix(-g[:, None], g[:, None])
    return LMEProblem([(Kii, Mii), (Mii, Kii)], rhs=C)


@dataclass
class RadiationProblem:
    """Steady conduction with a radiative face; solved by Newton.

    ``R(X) = A1 X B1 + A2 X B2 - eps sigma G o (X^4 - T_inf^4) - C_b``
    and the Newton correction solves ``A1 dX B1 + A2 dX B2 + E o dX = -R(X)``
    with ``E = -4 eps sigma G o X^3``.
    """

    terms: list
    G: LowRankMatrix
    C_b: LowRankMatrix
    emissivity: float
    sigma: float
    T_inf: float
    X0: LowRankState
    partition: BoundaryPartition
    base: LMEProblem = None

    def __post_init__(self):
        self.base = LMEProblem(self.terms, rhs=self.C_b)

    @property
    def shape(self):
        return self.base.shape

    def _rad_cols(self, X, q):
        return self.emissivity * self.sigma * self.G.cols(q) * (X.cols(q) ** 4 - self.T_inf**4)

    def _rad_rows(self, X, p):
        return self.emissivity * self.sigma * self.G.rows(p) * (X.rows(p) ** 4 - self.T_inf**4)

    def residual(self, X):
        """Accessor for ``R(X)`` evaluated on demand at rows/columns."""
        lin = lowrank_apply(self.base.terms, X)
        C = self.C_b
        return FunctionAccessor(
            self.shape,
            lambda q: lin.cols(q) - self._rad_cols(X, q) - C.cols(q),
            lambda p: lin.rows(p) - self._rad_rows(X, p) - C.rows(p),
        )

    def hadamard(self, X):
        """Accessor for the Jacobian's elementwise coefficient ``-4 eps sigma G o X^3``."""
        c = -4.0 * self.emissivity * self.sigma
        return FunctionAccessor(
            self.shape,
            lambda q: c * self.G.cols(q) * X.cols(q) ** 3,
            lambda p: c * self.G.rows(p) * X.rows(p) ** 3,
        )

    def jacobian(self, X):
        return self.base.with_hadamard(self.hadamard(X)).with_rhs(None)


def assemble_radiation(
    nx=21,
    ny=13,
    nz=11,
    emissivity=0.9,
    sigma=STEFAN_BOLTZMANN,
    T_inf=273.15,
    dirichlet=313.15,
    k=1.0,
    lengths=(2.0, 1.25, 1.0),
) -> RadiationProblem:
    """Steady 3-D conduction with radiation from the face ``y = y_min``.

    The face ``y = y_min`` (minus its edges) carries the radiative flux; all
    other faces hold ``dirichlet``.  The unknown is matricised as
    ``(xy nodes) x (z nodes)``.  ``G`` is the lumped face mass, which is
    rank one on the tensor grid.
    """
    nx, ny, nz = _grid_nodes(nx), _grid_nodes(ny), _grid_nodes(nz)
    fx, fy, fz = fem_1d(nx - 1, lengths[0]), fem_1d(ny - 1, lengths[1]), fem_1d(nz - 1, lengths[2])
    Mr, Kr = fem_2d(fx, fy)
    ix, iy = np.divmod(np.arange(nx * ny), ny)
    i_r, b_r = _split(nx * ny, (ix > 0) & (ix < nx - 1) & (iy < ny - 1))
    i_c, b_c = _split(nz, (np.arange(nz) > 0) & (np.arange(nz) < nz - 1))
    part = BoundaryPartition(i_r, i_c, b_r, b_c, float(dirichlet))
    full_terms = [((-k) * Kr, fz.M), (Mr, (-k) * fz.K)]
    terms = [(_restrict(A, i_r), _restrict(B, i_c)) for A, B in full_terms]
    C_b = _boundary_rhs(full_terms, part, nx * ny, nz).scaled(-1.0)
    face_x = np.asarray(fx.M.sum(axis=1)).ravel()
    g_r = np.where(iy == 0, face_x[ix], 0.0)[i_r]
    g_c = np.asarray(fz.M.sum(axis=1)).ravel()[i_c]
    G = LowRankMatrix(g_r[:, None], g_c[:, None])
    n1, n2 = len(i_r), len(i_c)
    X0 = LowRankState(
        np.ones((n1, 1)) / np.sqrt(n1), np.array([dirichlet * np.sqrt(n1 * n2)]), np.ones((n2, 1)) / np.sqrt(n2)
    )
    return RadiationProblem(terms, G, C_b, emissivity, sigma, T_inf, X0, part)


def export_problem(problem: LMEProblem, directory):
    """Write coefficient matrices as Matrix Market files (``A0.mtx``, ``B0.mtx``, ``A1.mtx``...).

    The right-hand side is written densely as ``C.mtx`` when it is available.
    Returns the list of written paths.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    out = []
    pairs = ([("0", problem.mass)] if problem.mass is not None else []) + [
        (str(i + 1), t) for i, t in enumerate(problem.terms)
    ]
    for tag, (A, B) in pairs:
        for name, M in ((f"A{tag}", A), (f"B{tag}", B)):
            M = sp.identity(problem.shape[0 if name[0] == "A" else 1], format="csr") if M is None else M
            path = d / f"{name}.mtx"
            write_matrix_market(path, M)
            out.append(path)
    if not _is_zero(problem.rhs):
        path = d / "C.mtx"
        write_matrix_market(path, np.asarray(problem.rhs.to_dense()))
        out.append(path)
    return out
