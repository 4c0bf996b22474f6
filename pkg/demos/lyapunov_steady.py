"""Generalised Lyapunov equation solved by pseudo-time continuation.

Prints the steady residual after each outer iteration and, when the grid is
small enough, the error against the dense eigen-decomposition solution.

    python demos/lyapunov_steady.py [nx ny rank]
"""
import sys

import numpy as np

from tdbcur import SolverConfig, steady_solve
from tdbcur.oracle import dense_lyapunov
from tdbcur.problems import assemble_lyapunov


def main(nx=52, ny=32, rank=26):
    P = assemble_lyapunov(nx=nx, ny=ny)
    print(f"n = {P.shape[0]}, rank {rank}, fixed dtau = 1e4")

    def show(k, state, res, rel):
        print(f"  iteration {k:2d}: rank {state.rank:3d}  sweeps {res.sweeps:2d}  "
              f"gmres {res.gmres_iterations:6d}  steady residual {rel:.3e}")

    cfg = SolverConfig(r0=rank, dtau_fixed=1e4, eps_R=1e-11, max_outer_iters=30)
    state, trace = steady_solve(P, cfg, callback=show)
    print("converged" if trace.converged else "not converged")
    if P.shape[0] <= 2000:
        X = dense_lyapunov(P)
        print(f"relative error vs dense solve: {np.linalg.norm(state.to_dense() - X) / np.linalg.norm(X):.2e}")
    print("leading singular values:", np.array2string(state.S[:6], precision=4))


if __name__ == "__main__":
    main(*(int(a) for a in sys.argv[1:4]))
