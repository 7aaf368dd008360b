"""Principal eigenelements of growth-fragmentation equations.

Truncated, regularized eigenproblems are discretized with upwind finite volumes
and solved by shifted inverse iteration; continuation in the truncation
parameters recovers the full problem or detects that it has no solution.
"""

__version__ = "0.1.0"

from .problem_model import KernelSpec, ProblemSpec, RateSpec, eval_rate, kernel_mass, kernel_moment
from .discretization import (DiscreteOperator, Grid, TruncationParams, assemble_adjoint,
                             assemble_direct, build_grid, make_truncation)
from .eigensolver import (ContinuationResult, EigenTriple, SolverConfig, Stage, continuation_solve,
                          make_schedule, solve_truncated, support_infimum, verify_bounds)
from .assumption_audit import AssumptionReport, audit, middle_mass_bound
from .evolution import EvolutionState, conserved_pairing, evolve, gre_distance
from .oracles import AnalyticTriple, dense_spectrum, example_linear_beta, example_linear_tau

__all__ = [
    "KernelSpec", "ProblemSpec", "RateSpec", "eval_rate", "kernel_mass", "kernel_moment",
    "DiscreteOperator", "Grid", "TruncationParams", "assemble_adjoint", "assemble_direct",
    "build_grid", "make_truncation", "ContinuationResult", "EigenTriple", "SolverConfig", "Stage",
    "continuation_solve", "make_schedule", "solve_truncated", "support_infimum", "verify_bounds",
    "AssumptionReport", "audit", "middle_mass_bound", "EvolutionState", "conserved_pairing",
    "evolve", "gre_distance", "AnalyticTriple", "dense_spectrum", "example_linear_beta",
    "example_linear_tau",
]
