from .lp_format import LpFormatError, export_lp, format_lp, parse_lp
from .problem import (
    INF,
    IllConditionedError,
    IterationLimitError,
    LpColumn,
    LpError,
    LpProblem,
    LpRow,
    LpSolution,
    SolverTolerances,
    duality_gap,
    primal_residual,
    with_fixed_columns,
)
from .simplex import solve_lp
