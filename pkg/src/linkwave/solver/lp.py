"""LP relaxations of a :class:`~linkwave.milp.MilpModel`."""

from __future__ import annotations

import numpy as np
from scipy.optimize import linprog

from .simplex import LpResult, solve_standard

BACKENDS = ("auto", "simplex", "highs")
# dense simplex above this many matrix entries is slower than it is worth
AUTO_DENSE_LIMIT = 20_000


def pick_backend(model, backend: str = "auto") -> str:
    if backend not in BACKENDS:
        raise ValueError(f"unknown LP backend {backend!r}")
    if backend != "auto":
        return backend
    return "simplex" if model.n_rows * model.n_cols <= AUTO_DENSE_LIMIT else "highs"


class RelaxationSolver:
    """Solves the model's LP relaxation under tightened column bounds."""

    def __init__(self, model, backend: str = "auto"):
        self.model = model
        self.backend = pick_backend(model, backend)
        if self.backend == "highs":
            le, ge, eq = model.sense == "<", model.sense == ">", model.sense == "="
            A = model.A.tocsr()
            from scipy.sparse import vstack

            self._A_ub = vstack([A[le], -A[ge]]).tocsr()
            self._b_ub = np.concatenate([model.rhs[le], -model.rhs[ge]])
            self._A_eq = A[eq]
            self._b_eq = model.rhs[eq]
        else:
            self._dense = model.A.toarray()

    def solve(self, lo: np.ndarray | None = None, hi: np.ndarray | None = None) -> LpResult:
        m = self.model
        lo = m.lo if lo is None else np.maximum(lo, m.lo)
        hi = m.hi if hi is None else np.minimum(hi, m.hi)
        if np.any(lo > hi + 1e-9):
            return LpResult("infeasible", np.nan, None)
        if self.backend == "simplex":
            return solve_standard(m.c, self._dense, m.sense, m.rhs, lo, hi, maximize=True)
        res = linprog(
            -m.c,
            A_ub=self._A_ub if self._A_ub.shape[0] else None,
            b_ub=self._b_ub if self._A_ub.shape[0] else None,
            A_eq=self._A_eq if self._A_eq.shape[0] else None,
            b_eq=self._b_eq if self._A_eq.shape[0] else None,
            bounds=np.column_stack([lo, hi]),
            method="highs-ds",
        )
        if res.status == 0:
            x = np.clip(res.x, lo, hi)
            return LpResult("optimal", float(m.c @ x), x, int(getattr(res, "nit", 0)))
        if res.status == 2:
            return LpResult("infeasible", np.nan, None)
        if res.status == 3:
            return LpResult("unbounded", np.nan, None)
        return LpResult("iteration_limit", np.nan, None)


def solve_lp(model, extra_bounds: dict[int, tuple[float, float]] | None = None, backend: str = "auto") -> LpResult:
    """LP relaxation (binaries in [0, 1]) with optional per-column bound tightening."""
    lo, hi = model.lo.copy(), model.hi.copy()
    for col, (l, h) in (extra_bounds or {}).items():
        lo[col] = max(lo[col], l)
        hi[col] = min(hi[col], h)
    return RelaxationSolver(model, backend).solve(lo, hi)
