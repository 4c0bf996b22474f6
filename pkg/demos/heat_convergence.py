"""Time-step convergence of Euler, BDF2 and BDF3 on a 3-D heat problem.

The low-rank solution at t = 0.25 is compared with the exact semi-discrete
(modal) solution.  Fitted slopes should come out near 1, 2 and 3.

    python demos/heat_convergence.py [--full]

Without ``--full`` a smaller grid is used so the script finishes in about a
minute.
"""
import sys
import time

import numpy as np

from tdbcur import SolverConfig, integrate
from tdbcur.oracle import modal_heat_solution
from tdbcur.problems import assemble_heat_mde

T = 0.25


def main(full=False):
    grid = dict(nx=22, ny=22, nz=62) if full else dict(nx=12, ny=12, nz=32)
    hp = assemble_heat_mde(**grid)
    ref = modal_heat_solution(hp.problem, hp.X0.to_dense(), T)
    print(f"unknown {hp.problem.shape[0]} x {hp.problem.shape[1]}, rank 15, t = {T}")
    dts = [0.05, 0.01, 0.001]
    for scheme in ("euler", "bdf2", "bdf3"):
        errs = []
        t0 = time.perf_counter()
        for dt in dts:
            states, _ = integrate(hp.problem, hp.X0, scheme, dt, round(T / dt), SolverConfig(r0=15))
            errs.append(np.linalg.norm(states[-1].to_dense() - ref) / np.linalg.norm(ref))
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        print(f"{scheme:6s} errors {'  '.join(f'{e:.3e}' for e in errs)}  slope {slope:.2f}  ({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main("--full" in sys.argv)
