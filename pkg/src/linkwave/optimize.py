"""Building, solving and checking signal-timing models end to end."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import SignalPlan, SimulationError, Trajectory, simulate
from .milp import MilpModel, extract_flows, extract_signal_plan, solution_from_trajectory
from .network import Network, TimeGrid
from .solver import BnbParams, MilpSolution, branch_and_bound, is_feasible

VERIFY_TOL = 1e-5  # veh/h


def plan_from_relaxation(model: MilpModel, x: np.ndarray) -> SignalPlan:
    """Give each step's green to the slot with the larger relaxed u."""
    green = {}
    for jn in model.net.junctions:
        g = []
        for j in range(model.grid.n_steps):
            u1 = x[model.registry.get("U", jn.id, j, 0)]
            u2 = x[model.registry.get("U", jn.id, j, 1)]
            g.append(0 if u1 >= u2 else 1)
        green[jn.id] = np.array(g)
    return SignalPlan(green)


def simulate_plan(model: MilpModel, plan: SignalPlan) -> np.ndarray | None:
    """Column vector of the simulated trajectory under ``plan``, or None if the plan overflows a source."""
    try:
        traj = simulate(model.net, model.grid, plan, validate=False)
    except SimulationError:
        return None
    return solution_from_trajectory(model, traj, plan)


class PlanSearch:
    """Rounds relaxed signals to a plan, then hill-climbs by single-step flips.

    Every plan is scored by simulation, so whatever it returns is the unique
    trajectory of that plan; the caller still checks it against the rows.
    Scores are cached, which keeps repeated calls from the tree cheap.
    """

    def __init__(self, model: MilpModel, feas_tol: float = 1e-7, max_passes: int = 20, climb_every: int = 16):
        self.model = model
        self.climb_every = climb_every
        self.calls = 0
        self.best = -np.inf
        self.feas_tol = feas_tol
        self.max_passes = max_passes
        self.cache: dict[bytes, tuple[float, np.ndarray | None]] = {}
        self.junctions = [jn.id for jn in model.net.junctions]

    def _key(self, green: np.ndarray) -> bytes:
        return green.astype(np.int8).tobytes()

    def score(self, green: np.ndarray) -> tuple[float, np.ndarray | None]:
        key = self._key(green)
        if key not in self.cache:
            plan = SignalPlan({jid: green[k].copy() for k, jid in enumerate(self.junctions)})
            x = simulate_plan(self.model, plan)
            if x is None or not is_feasible(self.model, x, self.feas_tol):
                self.cache[key] = (-np.inf, None)
            else:
                self.cache[key] = (self.model.objective(x), x)
        return self.cache[key]

    def improve(self, green: np.ndarray) -> tuple[float, np.ndarray | None]:
        green = green.copy()
        best, best_x = self.score(green)
        for _ in range(self.max_passes):
            moved = False
            for k in range(green.shape[0]):
                for j in range(green.shape[1]):
                    green[k, j] ^= 1
                    val, x = self.score(green)
                    if val > best + self.feas_tol:
                        best, best_x, moved = val, x, True
                    else:
                        green[k, j] ^= 1
            if not moved:
                break
        return best, best_x

    def __call__(self, model: MilpModel, x: np.ndarray) -> np.ndarray | None:
        plan = plan_from_relaxation(model, x)
        green = np.array([plan.green[jid] for jid in self.junctions], dtype=np.int8)
        if self._key(green) in self.cache:
            return None
        # climbing costs dozens of simulations; do it on a fixed schedule, and
        # whenever the plain rounding is already a new best
        val, x = self.score(green)
        self.calls += 1
        if val > self.best or (self.calls - 1) % self.climb_every == 0:
            val, x = self.improve(green)
        self.best = max(self.best, val)
        return x


def solve_embedded(model: MilpModel, params: BnbParams | None = None, heuristic: bool = True) -> MilpSolution:
    params = params or BnbParams()
    search = PlanSearch(model, params.feas_tol) if heuristic else None
    return branch_and_bound(model, params, search)


@dataclass
class Verification:
    passed: bool
    max_deviation: float
    per_link: dict[str, float]
    worst_cell: tuple[str, str, int] | None  # (link, series, step)
    message: str = ""


def verify(net: Network, grid: TimeGrid, plan: SignalPlan, flows: Trajectory, tol: float = VERIFY_TOL) -> Verification:
    """Re-simulate under ``plan`` and compare every entrance and exit flow series."""
    if flows.q_bar.shape != (len(net.links), grid.n_steps):
        raise ValueError(
            f"flow table has shape {flows.q_bar.shape}, expected {(len(net.links), grid.n_steps)}"
        )
    try:
        sim = simulate(net, grid, plan)
    except SimulationError as exc:
        return Verification(False, np.inf, {}, (exc.link, "q_bar", exc.step), str(exc))
    per_link = {}
    worst = (0.0, None)
    for lid in sim.link_ids:
        i, k = sim.index(lid), flows.index(lid)
        for series in ("q_bar", "q_hat"):
            d = np.abs(getattr(sim, series)[i] - getattr(flows, series)[k])
            per_link[lid] = max(per_link.get(lid, 0.0), float(d.max(initial=0.0)))
            if d.size and d.max() > worst[0]:
                worst = (float(d.max()), (lid, series, int(np.argmax(d))))
    dev = worst[0]
    return Verification(dev <= tol, dev, per_link, worst[1])


def solution_plan_and_flows(model: MilpModel, sol: MilpSolution) -> tuple[SignalPlan, Trajectory]:
    return extract_signal_plan(model, sol.x), extract_flows(model, sol.x)
