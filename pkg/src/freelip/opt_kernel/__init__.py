"""Dense simplex LP and min-cost-flow solvers with certificates."""
from .lp import (
    EQ, GE, LE, INFEASIBLE, NUMERICAL, OPTIMAL, UNBOUNDED,
    LinearProgram, LpSolution, LPError, dual_bound, farkas_value, lp_solve, primal_residual,
)
from .mcf import FlowError, FlowNetwork, FlowResult, mcf_solve

__all__ = [
    "EQ", "GE", "LE", "INFEASIBLE", "NUMERICAL", "OPTIMAL", "UNBOUNDED",
    "LinearProgram", "LpSolution", "LPError", "dual_bound", "farkas_value", "lp_solve",
    "primal_residual", "FlowError", "FlowNetwork", "FlowResult", "mcf_solve",
]
