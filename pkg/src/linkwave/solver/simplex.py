"""Bounded-variable primal simplex (revised form, dense basis inverse).

Rows are turned into equalities with one bounded slack each; a phase-one
pass over artificial columns finds a feasible basis.  Pricing is Dantzig's
rule, switching to Bland's rule after a run of degenerate pivots so that the
method cannot cycle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
DEGENERATE_STREAK = 50
REFACTOR_EVERY = 64


@dataclass
class LpResult:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    objective: float
    x: np.ndarray | None
    iterations: int = 0


def _slack_bounds(sense: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    m = len(sense)
    lo = np.zeros(m)
    hi = np.zeros(m)
    hi[sense == "<"] = np.inf
    lo[sense == ">"] = -np.inf
    return lo, hi


class _Tableau:
    """Working state of the revised simplex on ``[A | I | D] z = b``."""

    def __init__(self, A: np.ndarray, b: np.ndarray, lo: np.ndarray, hi: np.ndarray, n_struct: int):
        self.A = A
        self.b = b
        self.lo = lo
        self.hi = hi
        self.m, self.N = A.shape
        self.n_struct = n_struct
        self.basis = np.zeros(self.m, dtype=int)
        self.is_basic = np.zeros(self.N, dtype=bool)
        self.z = np.zeros(self.N)
        self.Binv = np.eye(self.m)
        self.iterations = 0

    def refactor(self) -> None:
        B = self.A[:, self.basis]
        self.Binv = np.linalg.inv(B)
        nb = ~self.is_basic
        resid = self.b - self.A[:, nb] @ self.z[nb]
        self.z[self.basis] = self.Binv @ resid

    def run(self, cost: np.ndarray, max_iter: int) -> str:
        degenerate = 0
        since_refactor = 0
        while True:
            if self.iterations >= max_iter:
                return "iteration_limit"
            y = cost[self.basis] @ self.Binv
            d = cost - y @ self.A
            d[self.is_basic] = 0.0
            scale = 1.0 + np.abs(cost).max()
            tol = OPT_TOL * scale
            at_lo = self.z <= self.lo + FEAS_TOL
            at_hi = self.z >= self.hi - FEAS_TOL
            free = ~at_lo & ~at_hi
            can_up = (~self.is_basic) & (self.hi > self.lo) & (d < -tol) & (at_lo | free)
            can_down = (~self.is_basic) & (self.hi > self.lo) & (d > tol) & (at_hi | free)
            cand = np.flatnonzero(can_up | can_down)
            if cand.size == 0:
                return "optimal"
            bland = degenerate >= DEGENERATE_STREAK
            q = int(cand[0]) if bland else int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if can_up[q] else -1.0

            alpha = self.Binv @ self.A[:, q]
            delta = direction * alpha
            xb = self.z[self.basis]
            lob, hib = self.lo[self.basis], self.hi[self.basis]
            ratios = np.full(self.m, np.inf)
            dec = delta > PIVOT_TOL
            inc = delta < -PIVOT_TOL
            with np.errstate(invalid="ignore", divide="ignore"):
                ratios[dec] = np.maximum(xb[dec] - lob[dec], 0.0) / delta[dec]
                ratios[inc] = np.maximum(hib[inc] - xb[inc], 0.0) / -delta[inc]
            ratios[~np.isfinite(ratios)] = np.inf
            theta_flip = self.hi[q] - self.lo[q]
            theta = float(ratios.min()) if self.m else np.inf
            if theta == np.inf and theta_flip == np.inf:
                return "unbounded"

            self.iterations += 1
            if theta_flip <= theta:
                self.z[q] = self.hi[q] if direction > 0 else self.lo[q]
                self.z[self.basis] = xb - theta_flip * delta
                degenerate = 0
                continue

            ties = np.flatnonzero(ratios <= theta + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(delta[ties]))])
            leaving = self.basis[r]
            self.z[self.basis] = xb - theta * delta
            self.z[q] = self.z[q] + direction * theta
            self.z[leaving] = self.lo[leaving] if delta[r] > 0 else self.hi[leaving]
            degenerate = degenerate + 1 if theta <= 1e-12 else 0

            self.is_basic[leaving] = False
            self.is_basic[q] = True
            self.basis[r] = q
            piv = alpha[r]
            row = self.Binv[r] / piv
            self.Binv -= np.outer(alpha, row)
            self.Binv[r] = row
            since_refactor += 1
            if since_refactor >= REFACTOR_EVERY:
                self.refactor()
                since_refactor = 0


def solve_standard(
    c: np.ndarray,
    A,
    sense: np.ndarray,
    rhs: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    maximize: bool = True,
    max_iter: int = 50_000,
) -> LpResult:
    """Optimize ``c @ x`` over ``A x (sense) rhs``, ``lo <= x <= hi``."""
    A = A.toarray() if sp.issparse(A) else np.asarray(A, float)
    m, n = A.shape
    c = np.asarray(c, float)
    lo = np.asarray(lo, float)
    hi = np.asarray(hi, float)
    if np.any(lo > hi + FEAS_TOL):
        return LpResult("infeasible", np.nan, None)
    cost = -c if maximize else c.copy()
    slo, shi = _slack_bounds(np.asarray(sense))

    # nonbasic structural values
    x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
    resid = rhs - A @ x0
    sign = np.where(resid >= 0, 1.0, -1.0)
    # slack columns start nonbasic at zero, artificials absorb the residual
    big = np.hstack([A, np.eye(m), np.diag(sign)])
    all_lo = np.concatenate([lo, slo, np.zeros(m)])
    all_hi = np.concatenate([hi, shi, np.full(m, np.inf)])
    tab = _Tableau(big, np.asarray(rhs, float), all_lo, all_hi, n)
    tab.z[:n] = x0
    tab.basis = np.arange(n + m, n + 2 * m)
    tab.is_basic[tab.basis] = True
    tab.z[tab.basis] = np.abs(resid)
    tab.Binv = np.diag(sign)

    phase1 = np.concatenate([np.zeros(n + m), np.ones(m)])
    status = tab.run(phase1, max_iter)
    if status == "iteration_limit":
        return LpResult(status, np.nan, None, tab.iterations)
    tab.refactor()
    infeas = tab.z[n + m:].sum()
    if infeas > FEAS_TOL * max(1.0, np.abs(rhs).max(initial=0.0)):
        return LpResult("infeasible", np.nan, None, tab.iterations)

    tab.hi[n + m:] = 0.0
    phase2 = np.concatenate([cost, np.zeros(2 * m)])
    status = tab.run(phase2, max_iter)
    if status != "optimal":
        return LpResult(status, np.nan, None, tab.iterations)
    tab.refactor()
    x = np.clip(tab.z[:n], lo, hi)
    return LpResult("optimal", float(c @ x), x, tab.iterations)
