"""LP relaxation, branch-and-bound, and MPS exchange for signal-timing models."""

from .bnb import BnbParams, MilpSolution, NodeRecord, branch_and_bound, is_feasible, relative_gap
from .lp import RelaxationSolver, solve_lp
from .mpsio import SolutionImportError, export_mps, import_solution, read_solution_file, write_solution_file
from .simplex import LpResult, solve_standard

__all__ = [
    "BnbParams",
    "LpResult",
    "MilpSolution",
    "NodeRecord",
    "RelaxationSolver",
    "SolutionImportError",
    "branch_and_bound",
    "export_mps",
    "import_solution",
    "is_feasible",
    "read_solution_file",
    "relative_gap",
    "solve_lp",
    "solve_standard",
    "write_solution_file",
]
