"""Fixed-point CUR iteration for multi-term linear matrix equations.

Each sweep selects DEIM rows/columns from the current factors, projects the
coefficient matrices onto those samples, solves the column and row
subproblems with matrix GMRES and reassembles the iterate by stable CUR.
Around the sweep sit the residual check with rank growth, transient time
stepping, pseudo-time continuation to steady state and a Newton driver.
"""
import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .cur import LowRankMatrix, LowRankState, lowrank_norm_estimate, stable_cur
from .krylov import GmresStats, LinearMatrixOperator, gmres_lme
from .linalg import orthonormal_complement, pseudo_solve
from .selection import deim, row_support

__all__ = [
    "SolverConfig",
    "ProjectedSubproblem",
    "StepResult",
    "Trace",
    "ConvergenceError",
    "build_projections",
    "solve_column_subproblem",
    "solve_row_subproblem",
    "fixed_point_step",
    "tdb_cur_solve",
    "integrate",
    "pseudo_time_step",
    "steady_solve",
    "newton_solve",
    "ensure_rank",
    "augment_rank",
]


class ConvergenceError(RuntimeError):
    def __init__(self, msg, trace=None):
        super().__init__(msg)
        self.trace = trace


@dataclass
class SolverConfig:
    eps_R: float = 1e-10
    eps_Delta: float = 1e-9
    r0: int = 10
    delta_r: int = 2
    r_max: int = None
    krylov_m: int = 30
    krylov_tol: float = 1e-12
    krylov_atol: float = 0.0
    max_restarts: int = 10_000
    dtau_max: float = 1e4
    a_ramp: float = 25.0
    dtau_fixed: float = None
    max_fp_iters: int = 50
    fp_stall_window: int = 3
    fp_stall_ratio: float = 0.9
    max_outer_iters: int = 200
    rank_est_offset_R: int = 5
    rank_est_offset_Delta: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.r_max is None:
            self.r_max = self.r0
        if self.eps_R <= 0 or self.eps_Delta <= 0 or self.krylov_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.r0 > self.r_max:
            raise ValueError("r0 must not exceed r_max")


@dataclass
class ProjectedSubproblem:
    Z_A: list
    Z_B: list
    A_r: list
    B_r: list


@dataclass
class StepResult:
    """Outcome of one TDB-CUR solve (a time step or an outer iteration)."""

    state: LowRankState
    converged: bool = False
    sweeps: int = 0
    delta_norms: list = field(default_factory=list)
    residual_norm: float = math.nan
    rhs_norm: float = math.nan
    rank_increases: int = 0
    gmres_iterations: int = 0
    gmres_restarts: int = 0
    gmres_failures: int = 0
    max_krylov_basis: int = 0
    fp_converged: bool = False
    fp_stalled: bool = False


class Trace:
    """Per-iteration records; serialisable to CSV."""

    base_fields = [
        "iteration",
        "time",
        "rank",
        "sweeps",
        "delta_norm",
        "residual_norm",
        "steady_residual",
        "newton_delta",
        "gmres_iterations",
        "gmres_restarts",
        "converged",
    ]

    def __init__(self):
        self.rows = []

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def record(self, iteration, result: StepResult, time=math.nan, steady_residual=math.nan, newton_delta=math.nan):
        self.rows.append(
            {
                "iteration": iteration,
                "time": time,
                "rank": result.state.rank,
                "sweeps": result.sweeps,
                "delta_norm": result.delta_norms[-1] if result.delta_norms else math.nan,
                "residual_norm": result.residual_norm,
                "steady_residual": steady_residual,
                "newton_delta": newton_delta,
                "gmres_iterations": result.gmres_iterations,
                "gmres_restarts": result.gmres_restarts,
                "converged": int(result.converged),
                "max_basis": result.max_krylov_basis,
                "sigma": [float(s) for s in result.state.S],
            }
        )

    def column(self, name):
        return [row[name] for row in self.rows]

    def to_csv(self, path):
        width = max((len(r["sigma"]) for r in self.rows), default=0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.base_fields + [f"sigma_{i + 1}" for i in range(width)])
            for r in self.rows:
                vals = [_fmt(r[k]) for k in self.base_fields]
                sig = [_fmt(s) for s in r["sigma"]] + [""] * (width - len(r["sigma"]))
                w.writerow(vals + sig)


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def ensure_rank(state, r, rng):
    """Pad ``state`` with zero-weight orthonormal directions up to rank ``r``."""
    if state.rank >= r:
        return state
    return augment_rank(state, r - state.rank, rng, scale=0.0)


def augment_rank(state, k, rng, scale=1e-8):
    """Add ``k`` seeded random orthonormal directions with singular value ``sigma_r * scale``."""
    n1, n2 = state.shape
    k = min(k, n1 - state.rank, n2 - state.rank)
    if k <= 0:
        return state
    U = np.hstack([state.U, orthonormal_complement(state.U, k, rng)])
    Y = np.hstack([state.Y, orthonormal_complement(state.Y, k, rng)])
    s_new = (state.S[-1] * scale) if state.rank else 0.0
    return LowRankState(U, np.concatenate([state.S, np.full(k, s_new)]), Y)


def _checked_inverse_rhs(M, R, name):
    s = np.linalg.svd(M, compute_uv=False)
    if s.size == 0 or s[-1] <= s[0] * np.finfo(float).eps * max(M.shape):
        raise np.linalg.LinAlgError(f"interpolation block of the {name} basis is singular")
    return pseudo_solve(M, R)


def build_projections(state, p, q, p_A, q_B, pairs) -> ProjectedSubproblem:
    """Interpolation maps and reduced coefficients for the sampled subproblems.

    ``Z_A[i] = U[p_A[i]] @ inv(U[p])``, ``A_r[i] = A_i[p, p_A[i]] @ Z_A[i]``,
    ``Z_B[i] = inv(Y[q].T) @ Y[q_B[i]].T``, ``B_r[i] = Z_B[i] @ B_i[q_B[i], q]``.
    A ``None`` coefficient stands for the identity.
    """
    U, Y = state.U, state.Y
    Up, Yq = U[p], Y[q]
    Z_A, Z_B, A_r, B_r = [], [], [], []
    for (A, B), pa, qb in zip(pairs, p_A, q_B):
        za = _checked_inverse_rhs(Up.T, U[pa].T, "row").T
        zb = _checked_inverse_rhs(Yq.T, Y[qb].T, "column")
        Z_A.append(za)
        Z_B.append(zb)
        A_r.append(za if A is None else np.asarray(A[p][:, pa].todense()) @ za)
        B_r.append(zb if B is None else zb @ np.asarray(B[qb][:, q].todense()))
    return ProjectedSubproblem(Z_A, Z_B, A_r, B_r)


def _adjacency(eq, p, q):
    pairs, tpairs, _ = eq.all_pairs()
    p_A, q_B = [], []
    for (A, B), (At, Bt) in zip(pairs, tpairs):
        # p_A: column support of A[p, :]; q_B: row support of B[:, q] = CSR rows q of B.T
        p_A.append(p if A is None else row_support(A, p))
        q_B.append(q if B is None else row_support(Bt, q))
    return pairs, p_A, q_B


def _column_operator(eq, proj, q):
    pairs, _, _ = eq.all_pairs()
    E = eq.hadamard.cols(q) if eq.hadamard is not None else None
    ops = [(A, Br) for (A, _), Br in zip(pairs, proj.B_r)]
    if eq.mass is not None:
        return LinearMatrixOperator(ops[1:], mass=ops[0], hadamard=E, dt=eq.dt)
    return LinearMatrixOperator(ops, hadamard=E, dt=eq.dt)


def _row_operator(eq, proj, p):
    pairs, _, _ = eq.all_pairs()
    E = eq.hadamard.rows(p) if eq.hadamard is not None else None
    ops = [(Ar, B) for (_, B), Ar in zip(pairs, proj.A_r)]
    if eq.mass is not None:
        return LinearMatrixOperator(ops[1:], mass=ops[0], hadamard=E, dt=eq.dt)
    return LinearMatrixOperator(ops, hadamard=E, dt=eq.dt)


def solve_column_subproblem(eq, proj, q, state, cfg, stats=None):
    """Sampled columns ``X[:, q]`` with the residual zeroed on those columns."""
    op = _column_operator(eq, proj, q)
    X, st = gmres_lme(op, eq.rhs.cols(q), state.cols(q), cfg.krylov_m, cfg.krylov_tol, cfg.max_restarts, cfg.krylov_atol)
    if stats is not None:
        stats.append(st)
    return X


def solve_row_subproblem(eq, proj, p, state, cfg, stats=None):
    """Sampled rows ``X[p, :]`` with the residual zeroed on those rows."""
    op = _row_operator(eq, proj, p)
    X, st = gmres_lme(op, eq.rhs.rows(p), state.rows(p), cfg.krylov_m, cfg.krylov_tol, cfg.max_restarts, cfg.krylov_atol)
    if stats is not None:
        stats.append(st)
    return X


@dataclass
class _SweepContext:
    rng: np.random.Generator
    delta_basis: LowRankState = None
    residual_basis: LowRankState = None
    gmres: list = field(default_factory=list)
    last_samples: tuple = None


def fixed_point_step(eq, state, cfg, ctx=None):
    """One sweep: DEIM, projections, both subproblems, stable CUR, ``||dX||_F``.

    Returns ``(new_state, delta_norm)``.
    """
    if ctx is None:
        ctx = _SweepContext(np.random.default_rng(cfg.seed))
    p = deim(state.U)
    q = deim(state.Y)
    pairs, p_A, q_B = _adjacency(eq, p, q)
    proj = build_projections(state, p, q, p_A, q_B, pairs)
    cols = solve_column_subproblem(eq, proj, q, state, cfg, ctx.gmres)
    rows = solve_row_subproblem(eq, proj, p, state, cfg, ctx.gmres)
    new = stable_cur(cols, rows, p, q, intersection=0.5 * (cols[p] + rows[:, q]))
    ctx.last_samples = (p, q, cols, rows)
    diff = LowRankMatrix.combine([(1.0, new), (-1.0, state)])
    ctx.delta_basis, dnorm = lowrank_norm_estimate(
        diff, ctx.delta_basis, new.rank + cfg.rank_est_offset_Delta, ctx.rng
    )
    return new, dnorm


def _collect(result, ctx, cfg):
    for st in ctx.gmres:
        result.gmres_iterations += st.iterations
        result.gmres_restarts += st.restarts
        result.max_krylov_basis = max(result.max_krylov_basis, st.max_basis)
    # only the sweep that produced the accepted iterate matters; a stall
    # within a few digits of the target is rounding, not failure
    result.gmres_failures = sum(
        int(not st.converged and st.residual_norm > 1e3 * max(cfg.krylov_tol * st.rhs_norm, cfg.krylov_atol))
        for st in ctx.gmres[-2:]
    )
    ctx.gmres.clear()


def tdb_cur_solve(eq, state0, cfg, rank=None, ctx=None) -> StepResult:
    """Solve one step equation on the rank-``r`` manifold.

    Inner fixed-point sweeps run until ``||dX||_F <= eps_Delta ||X||_F``;
    then the sampled residual is checked against ``eps_R ||rhs||_F``.  If it
    is too large the sweeps continue once with ``eps_Delta`` tightened by
    1e-3, and if that does not help the rank grows by ``delta_r`` (up to
    ``r_max``).
    """
    if ctx is None:
        ctx = _SweepContext(np.random.default_rng(cfg.seed))
    rank = cfg.r0 if rank is None else rank
    if state0.rank == 0 or not np.any(state0.S):
        # a zero start carries no sampling information; borrow the bases of the RHS
        basis, _ = lowrank_norm_estimate(eq.rhs, None, rank, ctx.rng)
        k = min(rank, basis.rank)
        state0 = LowRankState(basis.U[:, :k], np.zeros(k), basis.Y[:, :k])
    state = ensure_rank(state0, min(rank, *eq.shape), ctx.rng)
    if state.rank > rank:
        state = LowRankState(state.U[:, :rank], state.S[:rank], state.Y[:, :rank])
    result = StepResult(state)
    result.rhs_norm = eq.rhs_norm(rng=np.random.default_rng(cfg.seed + 1))
    while True:
        fp_ok = False
        level = []
        eps = cfg.eps_Delta
        while True:
            for _ in range(cfg.max_fp_iters - len(level)):
                state, dnorm = fixed_point_step(eq, state, cfg, ctx)
                result.sweeps += 1
                result.delta_norms.append(dnorm)
                level.append(dnorm)
                if dnorm <= eps * max(state.fro_norm(), np.finfo(float).tiny):
                    fp_ok = True
                    break
                w = cfg.fp_stall_window
                if w and len(level) >= 2 * w and min(level[-w:]) > cfg.fp_stall_ratio * min(level[:-w]):
                    # sweeps cycle at the truncation level: the rank is too small
                    result.fp_stalled = eps == cfg.eps_Delta
                    break
            ctx.residual_basis, rnorm = lowrank_norm_estimate(
                eq.residual(state), ctx.residual_basis, state.rank + cfg.rank_est_offset_R, ctx.rng
            )
            ok = rnorm <= cfg.eps_R * result.rhs_norm
            # a contracting sweep stopped by eps_Delta may leave a residual that is
            # only a sweep or two away from eps_R; tighten once before growing the rank
            if ok or not fp_ok or eps < cfg.eps_Delta or len(level) >= cfg.max_fp_iters:
                break
            eps = cfg.eps_Delta * 1e-3
        result.residual_norm = rnorm
        result.state = state
        _collect(result, ctx, cfg)
        if ok or state.rank >= min(cfg.r_max, *eq.shape):
            result.converged = fp_ok and ok and result.gmres_failures == 0
            result.fp_converged = fp_ok
            return result
        state = augment_rank(state, cfg.delta_r, ctx.rng)
        result.rank_increases += 1


def integrate(problem, X0, scheme, dt, n_steps, cfg, bootstrap="extrapolated", callback=None):
    """Implicit BDF time stepping of ``A0 dX/dt B0 = sum_i Ai X Bi + E o X - C``.

    Each step equation is solved by :func:`tdb_cur_solve` starting from the
    latest state; the working rank carries over between steps.

    Returns ``(states, trace)`` with ``states = [X^0, ..., X^n]``.
    """
    from .problems import bdf_march, time_discretize

    rng = np.random.default_rng(cfg.seed)
    ctx = _SweepContext(rng)
    if not isinstance(X0, LowRankState):
        X0 = LowRankState.from_matrix(X0, cfg.r0)
    trace = Trace()
    trace.converged = True
    status = {"rank": cfg.r0, "step": 0, "t": 0.0}

    def step(sch, h, hist):
        eq = time_discretize(problem, sch, h, hist)
        res = tdb_cur_solve(eq, hist[0], cfg, status["rank"], ctx)
        status["rank"] = res.state.rank
        status["step"] += 1
        status["t"] += h
        trace.converged &= res.converged
        trace.record(status["step"], res, time=status["t"])
        if callback is not None:
            callback(status["step"], res)
        return res.state

    def extrapolate(fine, coarse):
        # rows -3, -2, -1 are the full step and the two half steps
        status["t"] = trace[-3]["time"]
        r = max(fine.rank, coarse.rank)
        return LowRankMatrix.combine([(2.0, fine), (-1.0, coarse)]).compress(r)

    states = bdf_march(step, extrapolate, X0, scheme, dt, n_steps, bootstrap)
    return states, trace


def pseudo_time_step(k, cfg):
    """Ramped pseudo-time step ``1 + dtau_max * (1 - exp(-(k - 1) / a))``."""
    if k < 1:
        raise ValueError("iteration count starts at 1")
    return 1.0 + cfg.dtau_max * (1.0 - math.exp(-(k - 1) / cfg.a_ramp))


def steady_solve(problem, cfg, X0=None, callback=None):
    """Pseudo-time continuation of ``sum_i Ai X Bi + E o X = C`` to steady state.

    Each outer iteration is one implicit Euler pseudo-time step solved by
    :func:`tdb_cur_solve` (fixed ``cfg.dtau_fixed`` or the ramped schedule).
    Stops when the steady residual is below ``eps_R ||C||_F``.

    Returns ``(state, trace)``; ``trace.converged`` tells whether it did.
    """
    rng = np.random.default_rng(cfg.seed)
    n1, n2 = problem.shape
    if X0 is None:
        state = LowRankState(np.zeros((n1, 0)), np.zeros(0), np.zeros((n2, 0)))
    elif isinstance(X0, LowRankState):
        state = X0
    else:
        state = LowRankState.from_matrix(X0, cfg.r0)
    ctx = _SweepContext(rng)
    steady_basis = None
    c_norm = problem.steady_equation().rhs_norm(rng=np.random.default_rng(cfg.seed + 1))
    trace = Trace()
    trace.converged = False
    rank = cfg.r0
    for k in range(1, cfg.max_outer_iters + 1):
        dtau = cfg.dtau_fixed if cfg.dtau_fixed is not None else pseudo_time_step(k, cfg)
        eq = problem.pseudo_time_equation(state, dtau)
        res = tdb_cur_solve(eq, state, cfg, rank, ctx)
        state = res.state
        rank = state.rank
        steady_basis, snorm = lowrank_norm_estimate(
            problem.steady_residual(state), steady_basis, rank + cfg.rank_est_offset_R, rng
        )
        rel = snorm / c_norm if c_norm > 0 else snorm
        trace.record(k, res, time=dtau, steady_residual=rel)
        if callback is not None:
            callback(k, state, res, rel)
        if rel <= cfg.eps_R:
            trace.converged = True
            break
    return state, trace


def newton_solve(residual_fn, jacobian_fn, X0, cfg, tol=1e-10, max_iters=30, rank=None, callback=None):
    """Newton iteration with each correction solved on the low-rank manifold.

    ``residual_fn(X)`` returns an accessor for ``R(X)``; ``jacobian_fn(X)``
    returns an :class:`~tdbcur.lme.LMEProblem` holding the linearised
    operator (terms plus Hadamard coefficient).  Each correction solves
    ``J(dX) = -R(X)`` in steady form without pseudo-time and the update
    ``X + dX`` is recompressed to the working rank.

    Returns ``(state, deltas)`` with ``deltas`` the sequence of ``||dX||_F``.
    """
    rank = cfg.r0 if rank is None else rank
    X = X0 if isinstance(X0, LowRankState) else LowRankState.from_matrix(X0, rank)
    rng = np.random.default_rng(cfg.seed)
    X = ensure_rank(X, rank, rng)
    deltas = []
    trace = Trace()
    for k in range(1, max_iters + 1):
        R = residual_fn(X)
        J = jacobian_fn(X).with_rhs(_Negated(R))
        eq = J.steady_equation()
        guess = LowRankState(X.U[:, :rank], np.zeros(min(rank, X.rank)), X.Y[:, :rank])
        res = tdb_cur_solve(eq, guess, replace(cfg, r_max=rank), rank, _SweepContext(rng))
        dX = res.state
        dn = dX.fro_norm()
        deltas.append(dn)
        trace.record(k, res, newton_delta=dn)
        X = LowRankMatrix.combine([(1.0, X), (1.0, dX)]).compress(rank)
        X = ensure_rank(X, rank, rng)
        if callback is not None:
            callback(k, X, dn)
        if not np.isfinite(dn):
            raise ConvergenceError("Newton correction is not finite", deltas)
        if dn <= tol:
            break
        if len(deltas) >= 4 and all(deltas[-i] > deltas[-i - 1] for i in range(1, 4)) and dn > 10 * min(deltas):
            raise ConvergenceError("Newton iteration diverging", deltas)
    newton_solve.last_trace = trace
    return X, deltas


class _Negated:
    def __init__(self, M):
        self.M = M
        self.shape = M.shape

    def cols(self, q):
        return -self.M.cols(q)

    def rows(self, p):
        return -self.M.rows(p)
