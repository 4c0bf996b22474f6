"""Low-rank CUR/DEIM solver for multi-term linear matrix equations."""
from .cur import (
    CurDiagnostics,
    LowRankMatrix,
    LowRankState,
    cur_diagnostics,
    lowrank_norm_estimate,
    stable_cur,
)
from .krylov import GmresStats, LinearMatrixOperator, apply_operator, gmres_lme
from .linalg import InvalidInputError, SvdFactors, frob_inner, pseudo_solve, thin_svd
from .lme import LMEProblem, StepEquation
from .selection import deim, find_adjacent
from .solver import (
    ConvergenceError,
    SolverConfig,
    Trace,
    integrate,
    newton_solve,
    pseudo_time_step,
    steady_solve,
    tdb_cur_solve,
)

__version__ = "0.1.0"
