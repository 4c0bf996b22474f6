"""Krylov dimension vs restart count on a Lyapunov problem with n = 2000.

Smaller ``m`` stores fewer Krylov matrices but needs more restarts and more
iterations in total.

    python demos/restart_tradeoff.py
"""
import time

from tdbcur import SolverConfig, steady_solve
from tdbcur.problems import assemble_lyapunov


def main():
    P = assemble_lyapunov(nx=52, ny=42)
    r = 10
    print(f"n = {P.shape[0]}, rank {r}")
    print(f"{'m':>5} {'m*r':>6} {'restarts':>9} {'iterations':>11} {'residual':>10} {'time':>7}")
    for m in (600, 60, 18, 6):
        t0 = time.perf_counter()
        cfg = SolverConfig(r0=r, krylov_m=m, dtau_fixed=1e4, eps_R=1e-4, max_outer_iters=10)
        _, trace = steady_solve(P, cfg)
        restarts = sum(trace.column("gmres_restarts"))
        iters = sum(trace.column("gmres_iterations"))
        res = trace[-1]["steady_residual"]
        print(f"{m:5d} {m * r:6d} {restarts:9d} {iters:11d} {res:10.2e} {time.perf_counter() - t0:6.1f}s")


if __name__ == "__main__":
    main()
