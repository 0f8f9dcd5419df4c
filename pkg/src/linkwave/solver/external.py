"""Solving an exported MPS file with HiGHS (``highspy``, an optional extra)."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .mpsio import write_solution_file


class ExternalSolverUnavailable(RuntimeError):
    pass


@dataclass
class ExternalResult:
    status: str
    objective: float | None
    bound: float | None
    gap: float | None
    n_rows: int
    n_cols: int


def solve_mps_with_highs(mps_path: str | Path, solution_path: str | Path, time_limit: float = 300.0,
                         gap_tol: float = 1e-4, seed: int = 0) -> ExternalResult:
    """Read ``mps_path`` into HiGHS, solve, and write a ``name value`` solution file."""
    try:
        import highspy
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise ExternalSolverUnavailable("highspy is not installed; pip install 'linkwave[highs]'") from exc

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(time_limit))
    h.setOptionValue("mip_rel_gap", float(gap_tol))
    h.setOptionValue("random_seed", int(seed))
    h.setOptionValue("threads", 1)
    status = h.readModel(str(mps_path))
    if status == highspy.HighsStatus.kError:
        raise RuntimeError(f"HiGHS could not read {mps_path}")
    lp = h.getLp()
    h.run()
    ms = h.getModelStatus()
    info = h.getInfo()
    label = {
        highspy.HighsModelStatus.kOptimal: "optimal",
        highspy.HighsModelStatus.kInfeasible: "infeasible",
        highspy.HighsModelStatus.kTimeLimit: "time_limit",
    }.get(ms, h.modelStatusToString(ms))
    sol = h.getSolution()
    have_x = label in ("optimal", "time_limit") and sol.value_valid
    names = [lp.col_names_[j] for j in range(lp.num_col_)]
    bound = float(info.mip_dual_bound) if have_x else None
    if have_x:
        write_solution_file(solution_path, names, list(sol.col_value), status=label, bound=bound)
    return ExternalResult(
        label,
        float(info.objective_function_value) if have_x else None,
        bound,
        float(info.mip_gap) if have_x else None,
        lp.num_row_,
        lp.num_col_,
    )
