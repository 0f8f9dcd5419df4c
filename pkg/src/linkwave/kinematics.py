"""Forward link-level simulation and the Lax-Hopf (Moskowitz) evaluator.

Discrete conventions used throughout the package:

* step ``j`` (0 <= j < n_steps) carries constant boundary flows on
  ``[j*dt, (j+1)*dt)``;
* cumulative curves are sampled on the grid, ``N_up[m] = dt * sum(q_bar[:m])``
  for ``m = 0..n_steps``; flows at negative step indices are zero;
* the regime bits of step ``j`` are evaluated at ``t = j*dt`` from curve
  values that only involve earlier steps, so one forward sweep suffices.

Exit and entrance flows are additionally capped by the vehicles actually
present (``send``) and the room actually left (``recv``) in the coming step.
In a free-flow exit regime the cap coincides with the regime-based demand;
it only bites when a queue would clear, or a link fill up, part-way through
a step.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .network import Network, LinkSpec, TimeGrid, offsets, require_valid
from .riemann import limit_flow

TIE_EPS = 1e-9  # vehicles
SOURCE_TOL = 1e-6  # veh/h of tolerated overfill at a source entrance


class SimulationError(RuntimeError):
    def __init__(self, link: str, step: int, message: str):
        super().__init__(f"link {link}, step {step}: {message}")
        self.link = link
        self.step = step


@dataclass
class SignalPlan:
    """``green[junction][j]`` is the incoming slot (0 or 1) holding green at step j."""

    green: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        self.green = {k: np.asarray(v, dtype=int) for k, v in self.green.items()}
        for jid, g in self.green.items():
            bad = np.flatnonzero((g != 0) & (g != 1))
            if bad.size:
                raise ValueError(f"junction {jid}: invalid green slot at step {int(bad[0])}")

    def u(self, junction: str, slot: int) -> np.ndarray:
        """0/1 green indicator for one incoming slot."""
        g = self.green[junction]
        return (g == slot).astype(int)

    @classmethod
    def constant(cls, net: Network, grid: TimeGrid, slot: int = 0) -> "SignalPlan":
        return cls({jn.id: np.full(grid.n_steps, slot) for jn in net.junctions})

    @classmethod
    def from_u(cls, u: Mapping[str, Sequence[tuple[int, int]]]) -> "SignalPlan":
        """Build from per-step (u1, u2) pairs; each pair must hold exactly one green."""
        green = {}
        for jid, pairs in u.items():
            g = []
            for j, (u1, u2) in enumerate(pairs):
                if u1 + u2 != 1 or {u1, u2} != {0, 1}:
                    raise ValueError(f"junction {jid}, step {j}: u1 + u2 = {u1 + u2}, need exactly one green")
                g.append(0 if u1 == 1 else 1)
            green[jid] = np.array(g, dtype=int)
        return cls(green)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SignalPlan):
            return NotImplemented
        return self.green.keys() == other.green.keys() and all(
            np.array_equal(self.green[k], other.green[k]) for k in self.green
        )


@dataclass
class CumulativeCurves:
    """Entrance and exit counts of one link on the time grid (length n_steps + 1)."""

    dt: float
    n_up: np.ndarray
    n_down: np.ndarray

    @classmethod
    def from_flows(cls, dt: float, q_bar: Sequence[float], q_hat: Sequence[float]) -> "CumulativeCurves":
        up = np.concatenate([[0.0], np.cumsum(np.asarray(q_bar, float)) * dt])
        down = np.concatenate([[0.0], np.cumsum(np.asarray(q_hat, float)) * dt])
        return cls(dt, up, down)

    @property
    def horizon(self) -> float:
        return self.dt * (len(self.n_up) - 1)

    def _at(self, values: np.ndarray, t: float | np.ndarray) -> np.ndarray:
        times = np.arange(len(values)) * self.dt
        return np.interp(t, times, values, left=0.0, right=values[-1])

    def up(self, t: float | np.ndarray) -> np.ndarray:
        return self._at(self.n_up, t)

    def down(self, t: float | np.ndarray) -> np.ndarray:
        return self._at(self.n_down, t)


@dataclass
class Trajectory:
    """Boundary flows, regimes and cumulative curves of every link.

    Arrays are indexed ``[link, step]``; ``n_up``/``n_down`` carry one more
    column (grid times 0..n_steps).
    """

    link_ids: list[str]
    dt: float
    q_bar: np.ndarray
    q_hat: np.ndarray
    r_bar: np.ndarray
    r_hat: np.ndarray
    q_bar_max: np.ndarray
    q_hat_max: np.ndarray
    send: np.ndarray
    recv: np.ndarray
    n_up: np.ndarray = field(default=None)  # type: ignore[assignment]
    n_down: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.n_up is None or self.n_down is None:
            self.recompute_curves()

    def recompute_curves(self) -> None:
        zeros = np.zeros((len(self.link_ids), 1))
        self.n_up = np.hstack([zeros, np.cumsum(self.q_bar, axis=1) * self.dt])
        self.n_down = np.hstack([zeros, np.cumsum(self.q_hat, axis=1) * self.dt])

    @property
    def n_steps(self) -> int:
        return self.q_bar.shape[1]

    def index(self, link_id: str) -> int:
        return self.link_ids.index(link_id)

    def curves(self, link_id: str) -> CumulativeCurves:
        i = self.index(link_id)
        return CumulativeCurves(self.dt, self.n_up[i].copy(), self.n_down[i].copy())

    @classmethod
    def zeros(cls, link_ids: Sequence[str], dt: float, n_steps: int) -> "Trajectory":
        shape = (len(link_ids), n_steps)
        z = lambda dtype=float: np.zeros(shape, dtype=dtype)  # noqa: E731
        return cls(list(link_ids), dt, z(), z(), z(int), z(int), z(), z(), z(), z())


# ---------------------------------------------------------------------------
# regime detection


def upstream_regime(n_up_t: float, n_down_lag: float, rho_jam_l: float, tie_eps: float = TIE_EPS) -> int:
    """1 when the congested zone has reached the link entrance."""
    return int(n_up_t >= n_down_lag + rho_jam_l - tie_eps)


def downstream_regime(n_up_lag: float, n_down_t: float, tie_eps: float = TIE_EPS) -> int:
    """0 when the link exit sees free flow (nothing queued at the exit)."""
    return 0 if n_up_lag <= n_down_t + tie_eps else 1


def _lag(arr: np.ndarray, idx: int) -> float:
    return float(arr[idx]) if idx >= 0 else 0.0


@dataclass(frozen=True)
class _LinkPlan:
    spec: LinkSpec
    delta_f: int
    delta_b: int
    cap: float


def simulate(
    net: Network,
    grid: TimeGrid,
    plan: SignalPlan,
    inflows: Mapping[str, Sequence[float]] | None = None,
    validate: bool = True,
) -> Trajectory:
    """Run the network forward under ``plan``.

    ``inflows`` overrides the network's own inflow profiles when given.
    Raises :class:`SimulationError` if a source link cannot absorb its
    exogenous inflow.
    """
    if validate:
        require_valid(net, grid)
    for jn in net.junctions:
        if jn.id not in plan.green:
            raise ValueError(f"signal plan has no entry for junction {jn.id}")
        if len(plan.green[jn.id]) < grid.n_steps:
            raise ValueError(f"signal plan for {jn.id} is shorter than the horizon")

    ids = [ln.id for ln in net.links]
    idx = {lid: i for i, lid in enumerate(ids)}
    lp = [_LinkPlan(ln, *offsets(ln, grid), ln.capacity) for ln in net.links]
    n, dt = grid.n_steps, grid.dt
    traj = Trajectory.zeros(ids, dt, n)
    n_up = np.zeros((len(ids), n + 1))
    n_down = np.zeros((len(ids), n + 1))

    source_flow = {}
    for ln in net.links:
        prof = None
        if inflows is not None and ln.id in inflows:
            prof = np.asarray(inflows[ln.id], float)
        elif net.inflow(ln.id) is not None:
            prof = np.asarray(net.inflow(ln.id).values, float)
        if prof is not None:
            source_flow[ln.id] = prof

    downstream = {ln.id: net.downstream_junction(ln.id) for ln in net.links}

    for j in range(n):
        # regimes, demand and supply of every link: all from strictly earlier steps
        for i, p in enumerate(lp):
            rho_l = p.spec.jam_storage
            rb = upstream_regime(n_up[i, j], _lag(n_down[i], j - p.delta_b), rho_l)
            rh = downstream_regime(_lag(n_up[i], j - p.delta_f), n_down[i, j])
            q_hat_lag = _lag(traj.q_hat[i], j - p.delta_b)
            q_bar_lag = _lag(traj.q_bar[i], j - p.delta_f)
            qbm = p.cap + rb * (q_hat_lag - p.cap)
            qhm = q_bar_lag + rh * (p.cap - q_bar_lag)
            present = (_lag(n_up[i], j + 1 - p.delta_f) - n_down[i, j]) / dt
            room = (_lag(n_down[i], j + 1 - p.delta_b) + rho_l - n_up[i, j]) / dt
            traj.r_bar[i, j] = rb
            traj.r_hat[i, j] = rh
            traj.q_bar_max[i, j] = qbm
            traj.q_hat_max[i, j] = qhm
            traj.send[i, j] = max(0.0, min(qhm, present))
            traj.recv[i, j] = max(0.0, min(qbm, room))

        # junction flows
        for jn in net.junctions:
            g = int(plan.green[jn.id][j])
            src = idx[jn.incoming[g]]
            outs = [idx[o] for o in jn.outgoing]
            q = limit_flow(traj.send[src, j], [traj.recv[o, j] for o in outs], jn.alpha[g])
            traj.q_hat[idx[jn.incoming[1 - g]], j] = 0.0
            traj.q_hat[src, j] = q
            for o, a in zip(outs, jn.alpha[g]):
                traj.q_bar[o, j] = a * q

        for i, p in enumerate(lp):
            lid = p.spec.id
            if downstream[lid] is None:
                traj.q_hat[i, j] = traj.send[i, j]
            if lid in source_flow:
                q_in = float(source_flow[lid][j])
                if q_in > traj.recv[i, j] + SOURCE_TOL:
                    raise SimulationError(
                        lid, j,
                        f"inflow {q_in:.6g} veh/h exceeds what the link can accept "
                        f"({traj.recv[i, j]:.6g} veh/h); it has spilled back to its entrance",
                    )
                traj.q_bar[i, j] = q_in
            n_up[i, j + 1] = n_up[i, j] + dt * traj.q_bar[i, j]
            n_down[i, j + 1] = n_down[i, j] + dt * traj.q_hat[i, j]

    traj.n_up = n_up
    traj.n_down = n_down
    return traj


# ---------------------------------------------------------------------------
# Lax-Hopf on a single link


def _check_domain(curves: CumulativeCurves, link: LinkSpec, t: float, x: float) -> None:
    if not (-1e-12 <= x <= link.length + 1e-12):
        raise ValueError(f"x = {x} outside link [0, {link.length}]")
    if not (-1e-12 <= t <= curves.horizon + 1e-12):
        raise ValueError(f"t = {t} outside [0, {curves.horizon}]")


def lax_hopf_branches(curves: CumulativeCurves, link: LinkSpec, t, x):
    """Upstream (forward-wave) and downstream (backward-wave) Lax-Hopf candidates."""
    fd = link.fd
    x = np.asarray(x, float)
    up = curves.up(t - x / fd.k)
    down = curves.down(t - (link.length - x) / fd.w) + fd.rho_jam * (link.length - x)
    return up, down


def moskowitz(curves: CumulativeCurves, link: LinkSpec, t: float, x: float) -> float:
    """Cumulative count N(t, x), with x measured from the link entrance."""
    _check_domain(curves, link, t, x)
    up, down = lax_hopf_branches(curves, link, t, x)
    return float(min(up, down))


def moskowitz_grid(curves: CumulativeCurves, link: LinkSpec, times, xs) -> np.ndarray:
    """N over a (t, x) grid, shape (len(times), len(xs))."""
    tt, xx = np.meshgrid(np.asarray(times, float), np.asarray(xs, float), indexing="ij")
    up, down = lax_hopf_branches(curves, link, tt, xx)
    return np.minimum(up, down)


def shock_position(curves: CumulativeCurves, link: LinkSpec, t: float, tol: float = 1e-6) -> float:
    """Location of the free-flow/congested interface at time ``t``.

    The gap between the two Lax-Hopf branches is nondecreasing in x, so the
    set where the upstream branch is active is an interval starting at the
    entrance; its right end is found by bisection.
    """
    _check_domain(curves, link, t, 0.0)

    def upstream_active(x: float) -> bool:
        up, down = lax_hopf_branches(curves, link, t, x)
        return bool(up <= down + TIE_EPS)

    a, b = 0.0, link.length
    if upstream_active(b):
        return b
    if not upstream_active(a):
        return a
    lo, hi = a, b
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if upstream_active(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def shock_series(curves: CumulativeCurves, link: LinkSpec, times) -> np.ndarray:
    return np.array([shock_position(curves, link, float(t)) for t in times])


def branch_sign_changes(curves: CumulativeCurves, link: LinkSpec, t: float, nx: int = 201) -> int:
    """Number of sign changes of (upstream - downstream) along the link."""
    xs = np.linspace(0.0, link.length, nx)
    up, down = lax_hopf_branches(curves, link, t, xs)
    diff = up - down
    sign = np.where(diff > TIE_EPS, 1, np.where(diff < -TIE_EPS, -1, 0))
    sign = sign[sign != 0]
    return int(np.count_nonzero(np.diff(sign)))


def check_bounded_shock(curves: CumulativeCurves, link: LinkSpec, c: float, tol: float = TIE_EPS) -> np.ndarray:
    """Per grid time, whether the congested zone stays within [c, L]."""
    if not (0.0 < c < link.length):
        raise ValueError(f"c = {c} must lie strictly inside (0, {link.length})")
    fd = link.fd
    times = np.arange(len(curves.n_up)) * curves.dt
    lhs = curves.up(times - c / fd.k)
    rhs = curves.down(times - (link.length - c) / fd.w) + fd.rho_jam * (link.length - c)
    return lhs <= rhs + tol


# ---------------------------------------------------------------------------
# performance measures


@dataclass(frozen=True)
class Metrics:
    throughput: float
    occupancy_integral: float
    free_flow_baseline: float

    @property
    def total_delay(self) -> float:
        return self.occupancy_integral - self.free_flow_baseline

    def as_dict(self) -> dict[str, float]:
        return {
            "throughput": self.throughput,
            "total_delay": self.total_delay,
            "occupancy_integral": self.occupancy_integral,
            "free_flow_baseline": self.free_flow_baseline,
        }


def metrics(traj: Trajectory, net: Network, grid: TimeGrid) -> Metrics:
    """Vehicles discharged by exit links, and vehicle-hours spent in the network.

    Occupancy after each step is summed over the horizon; the baseline is the
    occupancy the same entrance curve would produce in pure free flow.
    """
    dt = traj.dt
    exits = [traj.index(l) for l in net.exit_links()]
    throughput = dt * float(traj.q_hat[exits].sum()) if exits else 0.0
    occ = traj.n_up[:, 1:] - traj.n_down[:, 1:]
    baseline = 0.0
    for ln in net.links:
        i = traj.index(ln.id)
        df, _ = offsets(ln, grid)
        up = traj.n_up[i]
        m = np.arange(1, len(up))
        lagged = np.where(m - df >= 0, up[np.clip(m - df, 0, None)], 0.0)
        baseline += dt * float((up[1:] - lagged).sum())
    return Metrics(throughput, dt * float(occ.sum()), baseline)
