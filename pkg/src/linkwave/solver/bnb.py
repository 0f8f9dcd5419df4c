"""Branch-and-bound over the binary columns of a :class:`MilpModel`."""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .lp import RelaxationSolver

NODE_SELECTION = ("best_bound", "depth_first")
BRANCHING = ("most_fractional", "signals_by_step")


@dataclass
class BnbParams:
    time_limit: float = 300.0
    int_tol: float = 1e-6
    gap_tol: float = 1e-4
    feas_tol: float = 1e-7
    node_selection: str = "best_bound"
    branching: str = "signals_by_step"
    backend: str = "auto"
    max_nodes: int | None = None
    keep_log: bool = True

    def __post_init__(self) -> None:
        if self.node_selection not in NODE_SELECTION:
            raise ValueError(f"node_selection must be one of {NODE_SELECTION}")
        if self.branching not in BRANCHING:
            raise ValueError(f"branching must be one of {BRANCHING}")


@dataclass
class NodeRecord:
    node: int
    parent: int
    depth: int
    lp_status: str
    lp_objective: float
    parent_objective: float
    incumbent: float
    bound: float


@dataclass
class MilpSolution:
    status: str  # optimal | feasible | infeasible | time_limit
    x: np.ndarray | None
    objective: float
    bound: float
    gap: float
    nodes: int
    wall_time: float
    log: list[NodeRecord] = field(default_factory=list)
    source: str = "embedded"

    @property
    def has_incumbent(self) -> bool:
        return self.x is not None


def relative_gap(incumbent: float, bound: float) -> float:
    if not np.isfinite(incumbent):
        return np.inf
    return max(bound - incumbent, 0.0) / max(1.0, abs(incumbent))


def is_feasible(model, x: np.ndarray, feas_tol: float) -> bool:
    viol = model.row_violations(x) / model.row_scale(x)
    return bool(viol.max(initial=0.0) <= feas_tol and model.bound_violations(x).max(initial=0.0) <= feas_tol)


# A heuristic maps (model, relaxed x) to a candidate full column vector or None.
Heuristic = Callable[[object, np.ndarray], "np.ndarray | None"]


@dataclass(order=True)
class _Node:
    key: tuple
    id: int = field(compare=False)
    parent: int = field(compare=False)
    depth: int = field(compare=False)
    bound: float = field(compare=False)
    fixes: dict = field(compare=False)


def branch_and_bound(model, params: BnbParams | None = None, heuristic: Heuristic | None = None) -> MilpSolution:
    """Maximize over the model with binaries restricted to {0, 1}.

    Nodes carry only their binary fixings; the incumbent is the single piece
    of shared state.  Ties in node selection go to the deepest node, then to
    the earliest created; ties in branching go to the lowest column index.
    """
    p = params or BnbParams()
    t0 = time.perf_counter()
    lp = RelaxationSolver(model, p.backend)
    bins = np.flatnonzero(model.binary)
    priority = _branch_priority(model, bins, p.branching)

    inc_x: np.ndarray | None = None
    inc_obj = -np.inf
    log: list[NodeRecord] = []
    heap: list[_Node] = []
    counter = 0

    def push(parent: int, depth: int, bound: float, fixes: dict) -> None:
        nonlocal counter
        counter += 1
        if p.node_selection == "best_bound":
            key = (-bound, -depth, counter)
        else:
            key = (-depth, -bound, counter)
        heapq.heappush(heap, _Node(key, counter, parent, depth, bound, fixes))

    def consider(x: np.ndarray) -> None:
        nonlocal inc_x, inc_obj
        obj = model.objective(x)
        if obj > inc_obj + p.feas_tol and is_feasible(model, x, p.feas_tol):
            inc_x, inc_obj = x.copy(), obj

    def open_bound() -> float:
        if not heap:
            return -np.inf
        if p.node_selection == "best_bound":
            return heap[0].bound
        return max(nd.bound for nd in heap)

    push(0, 0, np.inf, {})
    nodes = 0
    stopped = ""  # "time" or "nodes" when a limit cut the search short
    while heap:
        bound_now = max(open_bound(), inc_obj)
        if inc_x is not None and relative_gap(inc_obj, bound_now) <= p.gap_tol:
            break
        if time.perf_counter() - t0 > p.time_limit:
            stopped = "time"
            break
        if p.max_nodes is not None and nodes >= p.max_nodes:
            stopped = "nodes"
            break
        nd = heapq.heappop(heap)
        if inc_x is not None and nd.bound <= inc_obj + p.gap_tol * max(1.0, abs(inc_obj)):
            continue
        nodes += 1
        lo, hi = model.lo.copy(), model.hi.copy()
        for col, v in nd.fixes.items():
            lo[col] = hi[col] = v
        res = lp.solve(lo, hi)
        if p.keep_log:
            log.append(NodeRecord(nd.id, nd.parent, nd.depth, res.status, res.objective, nd.bound, inc_obj, bound_now))
        if res.status != "optimal":
            continue
        # a child can never beat its parent; clamp round-off so bounds stay monotone
        obj = min(res.objective, nd.bound)
        x = res.x
        if heuristic is not None:
            cand = heuristic(model, x)
            if cand is not None:
                consider(cand)
        if inc_x is not None and obj <= inc_obj + p.gap_tol * max(1.0, abs(inc_obj)):
            continue
        frac = np.minimum(x[bins] - np.floor(x[bins]), np.ceil(x[bins]) - x[bins])
        open_cols = frac > p.int_tol
        if not open_cols.any():
            consider(_polish(model, lp, x, bins, p))
            continue
        col = _choose(bins, frac, open_cols, priority)
        first = 1.0 if x[col] >= 0.5 else 0.0
        for v in (first, 1.0 - first):
            push(nd.id, nd.depth + 1, obj, {**nd.fixes, int(col): v})

    wall = time.perf_counter() - t0
    bound = max(open_bound(), inc_obj) if heap else inc_obj
    if inc_x is None:
        status = "time_limit" if stopped else "infeasible"
        return MilpSolution(status, None, np.nan, open_bound() if heap else -np.inf, np.inf, nodes, wall, log)
    gap = relative_gap(inc_obj, bound)
    if gap <= p.gap_tol:
        status = "optimal"
    elif stopped == "time":
        status = "time_limit"
    else:
        status = "feasible"
    return MilpSolution(status, inc_x, inc_obj, bound, gap, nodes, wall, log)


def _branch_priority(model, bins: np.ndarray, rule: str) -> np.ndarray:
    """Smaller value branches first; only consulted among fractional columns."""
    if rule == "most_fractional":
        return np.zeros(len(bins))
    # signal columns in time order, everything else afterwards
    tags = [model.registry.tags[c] for c in bins]
    horizon = model.grid.n_steps
    return np.array([float(t.step) if t.kind == "U" else float(horizon) for t in tags])


def _choose(bins: np.ndarray, frac: np.ndarray, open_cols: np.ndarray, priority: np.ndarray) -> int:
    cand = np.flatnonzero(open_cols)
    best_pri = priority[cand].min()
    cand = cand[priority[cand] == best_pri]
    # argmax returns the first maximum, and bins is ascending, so ties go to the lowest column
    return int(bins[cand[np.argmax(frac[cand])]])


def _polish(model, lp: RelaxationSolver, x: np.ndarray, bins: np.ndarray, p: BnbParams) -> np.ndarray:
    """Snap binaries to 0/1 and re-solve the continuous part at those values."""
    lo, hi = model.lo.copy(), model.hi.copy()
    snapped = np.round(x[bins])
    lo[bins] = hi[bins] = snapped
    res = lp.solve(lo, hi)
    if res.status == "optimal":
        return res.x
    y = x.copy()
    y[bins] = snapped
    return y
