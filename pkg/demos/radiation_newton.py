"""Newton iteration for conduction with a radiating face, low rank vs dense.

The dense Newton corrections shrink quadratically; the low-rank ones follow
them until they reach a floor set by the rank, and a larger rank gives a
lower floor.

    python demos/radiation_newton.py
"""
from tdbcur import SolverConfig, newton_solve
from tdbcur.oracle import fom_newton
from tdbcur.problems import assemble_radiation


def main():
    rp = assemble_radiation(nx=17, ny=11, nz=17)
    print(f"unknown {rp.shape[0]} x {rp.shape[1]}")
    _, dense = fom_newton(rp, rp.X0.to_dense(), tol=1e-12)
    print("dense   ", "  ".join(f"{d:.4e}" for d in dense))
    for r in (3, 5, 8):
        _, deltas = newton_solve(rp.residual, rp.jacobian, rp.X0, SolverConfig(r0=r), tol=1e-12, max_iters=8)
        print(f"rank {r:2d} ", "  ".join(f"{d:.4e}" for d in deltas))


if __name__ == "__main__":
    main()
