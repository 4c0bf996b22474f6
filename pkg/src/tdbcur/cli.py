"""Command-line driver.

    tdbcur --problem heat3d --scheme bdf2 --dt 0.01 --rank 10 --output out/
    tdbcur --problem lyapunov --nx 21 --ny 16 --rank 12 --dtau 1e4 --output out/
    tdbcur --problem radiation --rank 10 --oracle --output out/
    tdbcur --problem from-files --matrices mats/ --rank 8 --output out/

Writes ``trace.csv`` (one row per solve) and ``summary.csv`` into the
output directory.  Exit status: 0 converged, 1 not converged, 2 usage error.
"""
import argparse
import csv
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .cur import LowRankState
from .io import read_matrix_market
from .linalg import InvalidInputError
from .lme import LMEProblem
from .oracle import DENSE_CAP, best_rank_r, dense_lyapunov, fom_integrate, fom_newton, fom_solve
from .problems import assemble_heat_mde, assemble_lyapunov, assemble_radiation
from .solver import ConvergenceError, SolverConfig, integrate, newton_solve, steady_solve

TRANSIENT = ("heat2d", "heat3d")


def build_parser():
    p = argparse.ArgumentParser(prog="tdbcur", description="Low-rank CUR/DEIM solver for matrix equations.")
    p.add_argument("--problem", required=True, choices=["heat2d", "heat3d", "lyapunov", "radiation", "from-files"])
    p.add_argument("--scheme", choices=["euler", "bdf2", "bdf3"], help="time scheme (transient problems only)")
    p.add_argument("--bootstrap", choices=["extrapolated", "lower-order"], default="extrapolated")
    p.add_argument("--nx", type=int)
    p.add_argument("--ny", type=int)
    p.add_argument("--nz", type=int)
    p.add_argument("--dt", type=float, help="time step (transient problems)")
    p.add_argument("--t-final", type=float, default=0.25)
    p.add_argument("--dtau", type=float, help="fixed pseudo-time step (overrides the ramp)")
    p.add_argument("--dtau-max", type=float, default=1e4)
    p.add_argument("--a-ramp", type=float, default=25.0)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--delta-rank", type=int, default=2)
    p.add_argument("--rank-max", type=int)
    p.add_argument("--eps-residual", type=float, default=1e-10)
    p.add_argument("--eps-delta", type=float, default=1e-9)
    p.add_argument("--krylov-dim", type=int, default=30)
    p.add_argument("--krylov-tol", type=float, default=1e-12)
    p.add_argument("--max-restarts", type=int, default=10_000)
    p.add_argument("--max-iters", type=int, default=200, help="outer (pseudo-time or Newton) iteration cap")
    p.add_argument("--newton-tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=int(os.environ.get("TDBCUR_SEED", "0")))
    p.add_argument("--output", required=True, help="output directory")
    p.add_argument("--oracle", action="store_true", help="compare with the dense solution when it fits")
    p.add_argument("--matrices", help="directory of Matrix Market files for from-files mode")
    return p


def _validate(p, args):
    if args.scheme is not None and args.problem not in TRANSIENT + ("from-files",):
        p.error(f"--scheme applies to transient problems, not {args.problem}")
    if args.dt is not None and args.problem not in TRANSIENT + ("from-files",):
        p.error(f"--dt applies to transient problems, not {args.problem}")
    if args.problem == "from-files" and not args.matrices:
        p.error("--problem from-files requires --matrices")
    if args.matrices and args.problem != "from-files":
        p.error("--matrices is only used with --problem from-files")
    if args.rank < 1:
        p.error("--rank must be positive")
    if args.rank_max is not None and args.rank_max < args.rank:
        p.error("--rank-max must be at least --rank")
    for name in ("eps_residual", "eps_delta", "krylov_tol"):
        if getattr(args, name) <= 0:
            p.error(f"--{name.replace('_', '-')} must be positive")
    for name in ("dt", "dtau", "t_final"):
        v = getattr(args, name)
        if v is not None and v <= 0:
            p.error(f"--{name.replace('_', '-')} must be positive")
    if args.krylov_dim < 1:
        p.error("--krylov-dim must be positive")


def _config(args):
    return SolverConfig(
        eps_R=args.eps_residual,
        eps_Delta=args.eps_delta,
        r0=args.rank,
        delta_r=args.delta_rank,
        r_max=args.rank_max if args.rank_max is not None else args.rank,
        krylov_m=args.krylov_dim,
        krylov_tol=args.krylov_tol,
        max_restarts=args.max_restarts,
        dtau_max=args.dtau_max,
        a_ramp=args.a_ramp,
        dtau_fixed=args.dtau,
        max_outer_iters=args.max_iters,
        seed=args.seed,
    )


def _load_problem(directory):
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d}: not a directory")

    def load(name):
        f = d / f"{name}.mtx"
        return read_matrix_market(f) if f.exists() else None

    terms = []
    i = 1
    while (d / f"A{i}.mtx").exists() or (d / f"B{i}.mtx").exists():
        terms.append((load(f"A{i}"), load(f"B{i}")))
        i += 1
    if not terms:
        raise FileNotFoundError(f"{d}: no A1.mtx/B1.mtx found")
    A0, B0 = load("A0"), load("B0")
    mass = (A0, B0) if A0 is not None or B0 is not None else None
    C = load("C")
    E = load("E")
    return LMEProblem(
        terms,
        rhs=None if C is None else C.toarray(),
        mass=mass,
        hadamard=None if E is None else E.toarray(),
    )


def _rel_sigma_error(state, X, r):
    ref = best_rank_r(X, r).S
    k = min(len(ref), state.rank)
    keep = ref[:k] >= 1e-8 * ref[0]
    return float(np.max(np.abs(state.S[:k][keep] - ref[:k][keep]) / ref[:k][keep]))


def _final_residual(args, trace):
    if not len(trace):
        return math.nan
    last = trace[-1]
    if args.problem == "radiation":
        return last["newton_delta"]
    if math.isnan(last["steady_residual"]):
        return last["residual_norm"]
    return last["steady_residual"]


def run(args):
    cfg = _config(args)
    summary = {"problem": args.problem}
    fom = None
    t0 = time.perf_counter()
    if args.problem in TRANSIENT:
        if args.problem == "heat2d":
            hp = assemble_heat_mde(nx=args.nx or 41, ny=args.ny or 31)
        else:
            hp = assemble_heat_mde(nx=args.nx or 22, ny=args.ny or 22, nz=args.nz or 32)
        dt = args.dt or 0.01
        n_steps = max(1, int(round(args.t_final / dt)))
        scheme = args.scheme or "euler"
        states, trace = integrate(hp.problem, hp.X0, scheme, dt, n_steps, cfg, args.bootstrap)
        state = states[-1]
        shape = hp.problem.shape
        if args.oracle and shape[0] * shape[1] <= DENSE_CAP:
            fom = fom_integrate(hp.problem, hp.X0.to_dense(), scheme, dt, n_steps, args.bootstrap)[-1]
        summary.update(scheme=scheme, dt=dt, steps=n_steps)
        converged = trace.converged
    elif args.problem == "lyapunov":
        problem = assemble_lyapunov(nx=args.nx or 21, ny=args.ny or 16)
        state, trace = steady_solve(problem, cfg)
        shape = problem.shape
        if args.oracle and shape[0] <= 2000:
            fom = dense_lyapunov(problem)
        converged = trace.converged
    elif args.problem == "radiation":
        rp = assemble_radiation(nx=args.nx or 11, ny=args.ny or 9, nz=args.nz or 11)
        shape = rp.shape
        try:
            state, deltas = newton_solve(
                rp.residual, rp.jacobian, rp.X0, cfg, tol=args.newton_tol, max_iters=args.max_iters
            )
            converged = deltas[-1] <= args.newton_tol
        except ConvergenceError as exc:
            print(f"tdbcur: {exc}", file=sys.stderr)
            state, converged = None, False
        trace = newton_solve.last_trace
        if args.oracle and shape[0] * shape[1] <= DENSE_CAP and state is not None:
            fom = fom_newton(rp, rp.X0.to_dense(), tol=1e-12)[0]
    else:
        problem = _load_problem(args.matrices)
        shape = problem.shape
        if problem.mass is not None:
            dt = args.dt or 0.01
            n_steps = max(1, int(round(args.t_final / dt)))
            X0 = LowRankState(np.zeros((shape[0], 0)), np.zeros(0), np.zeros((shape[1], 0)))
            scheme = args.scheme or "euler"
            states, trace = integrate(problem, X0, scheme, dt, n_steps, cfg, args.bootstrap)
            state = states[-1]
            if args.oracle and shape[0] * shape[1] <= DENSE_CAP:
                fom = fom_integrate(problem, np.zeros(shape), scheme, dt, n_steps, args.bootstrap)[-1]
        else:
            state, trace = steady_solve(problem, cfg)
            if args.oracle and shape[0] * shape[1] <= DENSE_CAP:
                fom = fom_solve(problem.steady_equation())
        converged = trace.converged
    wall = time.perf_counter() - t0

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    rank = state.rank if state is not None else 0
    max_basis = max((r.get("max_basis", 0) for r in trace), default=0)
    summary.update(
        n1=shape[0],
        n2=shape[1],
        rank=rank,
        converged=int(bool(converged)),
        solves=len(trace),
        sweeps=sum(r["sweeps"] for r in trace),
        gmres_iterations=sum(r["gmres_iterations"] for r in trace),
        gmres_restarts=sum(r["gmres_restarts"] for r in trace),
        krylov_vectors=args.krylov_dim * rank,
        krylov_entries=max(shape) * rank * args.krylov_dim,
        max_krylov_basis=max_basis,
        final_residual=_final_residual(args, trace),
        wall_time=wall,
    )
    if fom is not None and state is not None:
        summary["fom_rel_error"] = float(np.linalg.norm(state.to_dense() - fom) / np.linalg.norm(fom))
        summary["fom_sigma_rel_error"] = _rel_sigma_error(state, fom, rank)
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(summary))
        w.writerow([repr(v) if isinstance(v, float) else v for v in summary.values()])
    return 0 if converged else 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return run(args)
    except (FileNotFoundError, InvalidInputError) as exc:
        print(f"tdbcur: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
