"""Mixed-integer linear program for signal timing on the link-level model.

Every column carries a :class:`Tag` naming the quantity it stands for, so a
solution vector can be read back as a signal plan and a trajectory.  The
row families mirror the discrete model in :mod:`linkwave.kinematics`:

=================  =========================================================
family             rows
=================  =========================================================
regime_up          entrance regime bit from the spill-back test (2 per step)
regime_down        exit regime bit from the free-flow test (2 per step)
supply             regime-based receiving flow (4 per step)
demand             regime-based sending flow (4 per step)
send_cap           exact min(demand, vehicles present) (4 per step)
recv_cap           exact min(supply, room left); 2 check rows on sources
exit               free discharge of links leaving the network
min_beta           exact min of the outgoing receive ratios (4 per slot)
min_zeta           exact min of send and that ratio (4 per slot)
gating             discharge equals the min when green, zero when red
turning            outgoing entrance flow from the turning fractions
exclusivity        one green per junction per step
bounded_shock      optional: congestion kept downstream of a point c
min_green          optional: minimum green duration
=================  =========================================================
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .kinematics import SignalPlan, Trajectory
from .network import Network, TimeGrid, ValidationError, exact, offsets, require_valid

OBJECTIVES = ("time_weighted_throughput", "throughput", "soft_bounded_shock")
BINARY_KINDS = frozenset({"RBar", "RHat", "Xi", "Eta", "U", "SendSel", "RecvSel"})
_NAMES = {
    "QBar": "QBAR", "QHat": "QHAT", "RBar": "RBAR", "RHat": "RHAT",
    "QBarMax": "QBARMAX", "QHatMax": "QHATMAX", "Send": "SEND", "Recv": "RECV",
    "SendSel": "SENDSEL", "RecvSel": "RECVSEL", "Zeta": "ZETA", "Beta": "BETA",
    "Xi": "XI", "Eta": "ETA", "U": "U", "ShockSlack": "SHOCKSLACK",
}


class ModelError(ValueError):
    pass


class ExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class Tag:
    kind: str
    owner: str
    slot: int  # junction slot, bounded-shock index, or -1
    step: int

    def name(self, width: int = 2) -> str:
        base = f"{_NAMES[self.kind]}_{self.owner}"
        if self.slot >= 0:
            base += f"_S{self.slot + 1}"
        return f"{base}_T{self.step:0{width}d}"


class VarRegistry:
    """Bijection between column indices and tags."""

    def __init__(self) -> None:
        self.tags: list[Tag] = []
        self._index: dict[Tag, int] = {}

    def add(self, tag: Tag) -> int:
        if tag in self._index:
            raise ModelError(f"duplicate column {tag}")
        self._index[tag] = len(self.tags)
        self.tags.append(tag)
        return self._index[tag]

    def __getitem__(self, tag: Tag) -> int:
        return self._index[tag]

    def get(self, kind: str, owner: str, step: int, slot: int = -1) -> int:
        return self._index[Tag(kind, owner, slot, step)]

    def __contains__(self, tag: Tag) -> bool:
        return tag in self._index

    def __len__(self) -> int:
        return len(self.tags)

    def copy(self) -> "VarRegistry":
        new = VarRegistry()
        new.tags = list(self.tags)
        new._index = dict(self._index)
        return new

    def count(self, kind: str) -> int:
        return sum(1 for t in self.tags if t.kind == kind)

    def binary_count(self) -> int:
        return sum(1 for t in self.tags if t.kind in BINARY_KINDS)


@dataclass
class MilpOptions:
    objective: str = "time_weighted_throughput"
    bounded_shock: list[tuple[str, float]] = field(default_factory=list)
    big_m: dict[str, float] = field(default_factory=dict)
    eps: float = 1e-4
    min_green: int = 0

    @classmethod
    def from_config(cls, doc: Mapping[str, Any] | None) -> "MilpOptions":
        doc = dict(doc or {})
        shocks = []
        for e in doc.get("bounded_shock", []) or []:
            if isinstance(e, Mapping):
                shocks.append((str(e["link"]), float(e["c_miles"])))
            else:
                shocks.append((str(e[0]), float(e[1])))
        opts = cls(
            objective=str(doc.get("objective", "time_weighted_throughput")),
            bounded_shock=shocks,
            big_m={str(k): float(v) for k, v in (doc.get("big_m") or {}).items()},
            eps=float(doc.get("eps", 1e-4)),
            min_green=int(doc.get("min_green", 0)),
        )
        if opts.objective not in OBJECTIVES:
            raise ModelError(f"unknown objective {opts.objective!r}; choose from {OBJECTIVES}")
        return opts


@dataclass
class MilpModel:
    """Maximize ``c @ x`` subject to ``A x (sense) rhs`` and column bounds."""

    registry: VarRegistry
    lo: np.ndarray
    hi: np.ndarray
    binary: np.ndarray
    A: sp.csr_matrix
    sense: np.ndarray  # '<', '=', '>'
    rhs: np.ndarray
    row_names: list[str]
    row_family: list[str]
    c: np.ndarray
    big_m: dict[str, dict[str, float]]
    eps: float
    net: Network
    grid: TimeGrid
    options: MilpOptions

    @property
    def n_cols(self) -> int:
        return len(self.lo)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    def column_names(self) -> list[str]:
        width = max(2, len(str(self.grid.n_steps - 1)))
        return [t.name(width) for t in self.registry.tags]

    def objective(self, x: np.ndarray) -> float:
        return float(self.c @ x)

    def row_violations(self, x: np.ndarray) -> np.ndarray:
        """Amount by which each row is violated (0 where satisfied)."""
        ax = self.A @ x
        viol = np.zeros(self.n_rows)
        le, ge, eq = self.sense == "<", self.sense == ">", self.sense == "="
        viol[le] = np.maximum(ax[le] - self.rhs[le], 0.0)
        viol[ge] = np.maximum(self.rhs[ge] - ax[ge], 0.0)
        viol[eq] = np.abs(ax[eq] - self.rhs[eq])
        return viol

    def row_scale(self, x: np.ndarray) -> np.ndarray:
        """Magnitude of the largest term in each row, for relative checks."""
        terms = abs(self.A).multiply(np.abs(x)[None, :]).tocsr()
        biggest = terms.max(axis=1).toarray().ravel()
        return np.maximum.reduce([np.ones(self.n_rows), biggest, np.abs(self.rhs)])

    def bound_violations(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(self.lo - x, 0.0) + np.maximum(x - self.hi, 0.0)

    def family_counts(self) -> Counter:
        return Counter(self.row_family)


class _Builder:
    def __init__(self, grid: TimeGrid):
        self.reg = VarRegistry()
        self.lo: list[float] = []
        self.hi: list[float] = []
        self.obj: list[float] = []
        self.rows_i: list[int] = []
        self.rows_j: list[int] = []
        self.rows_v: list[float] = []
        self.sense: list[str] = []
        self.rhs: list[float] = []
        self.names: list[str] = []
        self.family: list[str] = []
        self.width = max(2, len(str(grid.n_steps - 1)))

    def col(self, tag: Tag, lo: float, hi: float) -> int:
        idx = self.reg.add(tag)
        if tag.kind in BINARY_KINDS:
            lo, hi = max(lo, 0.0), min(hi, 1.0)
        self.lo.append(lo)
        self.hi.append(hi)
        self.obj.append(0.0)
        return idx

    def row(self, family: str, name: str, terms: Mapping[int, float] | Iterable[tuple[int, float]],
            sense: str, rhs: float) -> None:
        r = len(self.rhs)
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[int, float] = {}
        for j, v in items:
            acc[j] = acc.get(j, 0.0) + v
        for j in sorted(acc):
            if acc[j] != 0.0:
                self.rows_i.append(r)
                self.rows_j.append(j)
                self.rows_v.append(acc[j])
        self.sense.append(sense)
        self.rhs.append(float(rhs))
        self.names.append(f"{family.upper()}_{name}")
        self.family.append(family)

    def tname(self, owner: str, step: int, extra: str = "") -> str:
        return f"{owner}{extra}_T{step:0{self.width}d}"


def default_big_m(net: Network, grid: TimeGrid, overrides: Mapping[str, float] | None = None) -> dict[str, dict[str, float]]:
    """Per-family big-M constants: ``{family: {owner: M}}``."""
    overrides = dict(overrides or {})
    out: dict[str, dict[str, float]] = {"regime": {}, "flow": {}, "cap": {}, "min": {}}
    horizon = grid.horizon
    for ln in net.links:
        cap = ln.capacity
        out["regime"][ln.id] = overrides.get("regime", ln.jam_storage + cap * horizon)
        out["flow"][ln.id] = overrides.get("flow", cap)
        out["cap"][ln.id] = overrides.get("cap", ln.jam_storage / grid.dt + cap)
    for jn in net.junctions:
        caps = [net.link(l).capacity for l in (*jn.incoming, *jn.outgoing)]
        alphas = [a for row in jn.alpha for a in row if a > 0]
        out["min"][jn.id] = overrides.get("min", max(caps) / min(alphas))
    return out


def build_model(net: Network, grid: TimeGrid, options: MilpOptions | Mapping[str, Any] | None = None) -> MilpModel:
    if not isinstance(options, MilpOptions):
        options = MilpOptions.from_config(options)
    require_valid(net, grid)
    n, dt = grid.n_steps, grid.dt
    big_m = default_big_m(net, grid, options.big_m)
    eps = options.eps
    b = _Builder(grid)
    reg = b.reg

    info = {}
    for ln in net.links:
        df, db = offsets(ln, grid)
        info[ln.id] = (ln, df, db, ln.capacity)

    # ---- columns, link by link then junction by junction, step-major inside
    for ln in net.links:
        _, df, db, cap = info[ln.id]
        src = net.inflow(ln.id)
        for j in range(n):
            if src is not None:
                v = float(src.values[j])
                b.col(Tag("QBar", ln.id, -1, j), v, v)
            else:
                b.col(Tag("QBar", ln.id, -1, j), 0.0, cap)
            b.col(Tag("QHat", ln.id, -1, j), 0.0, cap)
            b.col(Tag("RBar", ln.id, -1, j), 0.0, 0.0 if j < db else 1.0)
            b.col(Tag("RHat", ln.id, -1, j), 0.0, 0.0 if j < df else 1.0)
            b.col(Tag("QBarMax", ln.id, -1, j), 0.0, cap)
            b.col(Tag("QHatMax", ln.id, -1, j), 0.0, cap)
            b.col(Tag("Send", ln.id, -1, j), 0.0, cap)
            b.col(Tag("SendSel", ln.id, -1, j), 0.0, 1.0)
            if src is None:
                b.col(Tag("Recv", ln.id, -1, j), 0.0, cap)
                b.col(Tag("RecvSel", ln.id, -1, j), 0.0, 1.0)
    for jn in net.junctions:
        beta_hi = max(net.link(o).capacity / a for row in jn.alpha for o, a in zip(jn.outgoing, row) if a > 0)
        for slot in (0, 1):
            cap_in = net.link(jn.incoming[slot]).capacity
            a3, a4 = jn.alpha[slot]
            for j in range(n):
                b.col(Tag("U", jn.id, slot, j), 0.0, 1.0)
                b.col(Tag("Zeta", jn.id, slot, j), 0.0, cap_in)
                b.col(Tag("Beta", jn.id, slot, j), 0.0, beta_hi)
                xi_lo, xi_hi = (1.0, 1.0) if a3 == 0 else (0.0, 0.0) if a4 == 0 else (0.0, 1.0)
                b.col(Tag("Xi", jn.id, slot, j), xi_lo, xi_hi)
                b.col(Tag("Eta", jn.id, slot, j), 0.0, 1.0)

    # ---- link rows
    for ln in net.links:
        _, df, db, cap = info[ln.id]
        lid = ln.id
        rho_l = ln.jam_storage
        m_reg = big_m["regime"][lid]
        m_flow = big_m["flow"][lid]
        m_cap = big_m["cap"][lid]
        qbar = [reg.get("QBar", lid, s) for s in range(n)]
        qhat = [reg.get("QHat", lid, s) for s in range(n)]
        is_source = net.inflow(lid) is not None
        is_exit = net.downstream_junction(lid) is None
        for j in range(n):
            rb, rh = reg.get("RBar", lid, j), reg.get("RHat", lid, j)
            qbm, qhm = reg.get("QBarMax", lid, j), reg.get("QHatMax", lid, j)
            name = b.tname(lid, j)

            if j >= db:
                # N_down[j - db] - N_up[j] + rho L, zero at congestion onset
                terms = [(qhat[s], dt) for s in range(j - db)] + [(qbar[s], -dt) for s in range(j)]
                b.row("regime_up", name + "_A", terms + [(rb, m_reg)], "<", m_reg - rho_l)
                b.row("regime_up", name + "_B", terms + [(rb, m_reg)], ">", eps - rho_l)
            if j >= df:
                terms = [(qbar[s], dt) for s in range(j - df)] + [(qhat[s], -dt) for s in range(j)]
                b.row("regime_down", name + "_A", terms + [(rh, -m_reg)], "<", 0.0)
                b.row("regime_down", name + "_B", terms + [(rh, -m_reg)], ">", eps - m_reg)

            lag_b = [(qhat[j - db], -1.0)] if j - db >= 0 else []
            b.row("supply", name + "_A", [(qbm, 1.0), (rb, m_flow)], ">", cap)
            b.row("supply", name + "_B", [(qbm, 1.0)], "<", cap)
            b.row("supply", name + "_C", [(qbm, 1.0), *lag_b, (rb, -m_flow)], ">", -m_flow)
            b.row("supply", name + "_D", [(qbm, 1.0), *lag_b, (rb, m_flow)], "<", m_flow)

            lag_f = [(qbar[j - df], -1.0)] if j - df >= 0 else []
            b.row("demand", name + "_A", [(qhm, 1.0), (rh, -m_flow)], ">", cap - m_flow)
            b.row("demand", name + "_B", [(qhm, 1.0)], "<", cap)
            b.row("demand", name + "_C", [(qhm, 1.0), *lag_f, (rh, m_flow)], ">", 0.0)
            b.row("demand", name + "_D", [(qhm, 1.0), *lag_f, (rh, -m_flow)], "<", 0.0)

            # vehicles present at the exit by the end of the step, as a flow
            snd, sel = reg.get("Send", lid, j), reg.get("SendSel", lid, j)
            present = [(qbar[s], -1.0) for s in range(j + 1 - df)] + [(qhat[s], 1.0) for s in range(j)]
            b.row("send_cap", name + "_A", [(snd, 1.0), (qhm, -1.0)], "<", 0.0)
            b.row("send_cap", name + "_B", [(snd, 1.0), *present], "<", 0.0)
            b.row("send_cap", name + "_C", [(snd, 1.0), (qhm, -1.0), (sel, m_cap)], ">", 0.0)
            b.row("send_cap", name + "_D", [(snd, 1.0), *present, (sel, -m_cap)], ">", -m_cap)

            # room left at the entrance by the end of the step, as a flow
            room = [(qhat[s], -1.0) for s in range(j + 1 - db)] + [(qbar[s], 1.0) for s in range(j)]
            room_rhs = rho_l / dt
            if is_source:
                b.row("recv_cap", name + "_A", [(qbar[j], 1.0), (qbm, -1.0)], "<", 0.0)
                b.row("recv_cap", name + "_B", [(qbar[j], 1.0), *room], "<", room_rhs)
            else:
                rcv, rsel = reg.get("Recv", lid, j), reg.get("RecvSel", lid, j)
                b.row("recv_cap", name + "_A", [(rcv, 1.0), (qbm, -1.0)], "<", 0.0)
                b.row("recv_cap", name + "_B", [(rcv, 1.0), *room], "<", room_rhs)
                b.row("recv_cap", name + "_C", [(rcv, 1.0), (qbm, -1.0), (rsel, m_cap)], ">", 0.0)
                b.row("recv_cap", name + "_D", [(rcv, 1.0), *room, (rsel, -m_cap)], ">", room_rhs - m_cap)

            if is_exit:
                b.row("exit", name, [(qhat[j], 1.0), (snd, -1.0)], "=", 0.0)

    # ---- junction rows
    for jn in net.junctions:
        m_min = big_m["min"][jn.id]
        for j in range(n):
            for slot in (0, 1):
                lin = jn.incoming[slot]
                m_gate = big_m["flow"][lin]
                u = reg.get("U", jn.id, j, slot)
                zeta = reg.get("Zeta", jn.id, j, slot)
                beta = reg.get("Beta", jn.id, j, slot)
                xi = reg.get("Xi", jn.id, j, slot)
                eta = reg.get("Eta", jn.id, j, slot)
                qh = reg.get("QHat", lin, j)
                snd = reg.get("Send", lin, j)
                name = b.tname(jn.id, j, f"_S{slot + 1}")
                a3, a4 = jn.alpha[slot]
                r3 = reg.get("Recv", jn.outgoing[0], j)
                r4 = reg.get("Recv", jn.outgoing[1], j)
                if a3 > 0:
                    b.row("min_beta", name + "_A", [(beta, 1.0), (r3, -1.0 / a3), (xi, m_min)], ">", 0.0)
                    b.row("min_beta", name + "_B", [(beta, 1.0), (r3, -1.0 / a3)], "<", 0.0)
                if a4 > 0:
                    b.row("min_beta", name + "_C", [(beta, 1.0), (r4, -1.0 / a4), (xi, -m_min)], ">", -m_min)
                    b.row("min_beta", name + "_D", [(beta, 1.0), (r4, -1.0 / a4)], "<", 0.0)
                b.row("min_zeta", name + "_A", [(zeta, 1.0), (snd, -1.0), (eta, m_min)], ">", 0.0)
                b.row("min_zeta", name + "_B", [(zeta, 1.0), (snd, -1.0)], "<", 0.0)
                b.row("min_zeta", name + "_C", [(zeta, 1.0), (beta, -1.0), (eta, -m_min)], ">", -m_min)
                b.row("min_zeta", name + "_D", [(zeta, 1.0), (beta, -1.0)], "<", 0.0)
                b.row("gating", name + "_A", [(qh, 1.0), (u, -m_gate)], "<", 0.0)
                b.row("gating", name + "_B", [(qh, 1.0), (zeta, -1.0), (u, -m_gate)], ">", -m_gate)
                b.row("gating", name + "_C", [(qh, 1.0), (zeta, -1.0)], "<", 0.0)
            for k, out in enumerate(jn.outgoing):
                terms = [(reg.get("QBar", out, j), 1.0)]
                for slot in (0, 1):
                    a = jn.alpha[slot][k]
                    if a:
                        terms.append((reg.get("QHat", jn.incoming[slot], j), -a))
                b.row("turning", b.tname(out, j), terms, "=", 0.0)
            b.row("exclusivity", b.tname(jn.id, j),
                  [(reg.get("U", jn.id, j, 0), 1.0), (reg.get("U", jn.id, j, 1), 1.0)], "=", 1.0)

    if options.min_green > 1:
        _add_min_green(b, net, grid, options.min_green)

    # ---- objective
    for lid in net.exit_links():
        for j in range(n):
            w = dt * (n - j) if options.objective == "time_weighted_throughput" else dt
            if options.objective != "soft_bounded_shock":
                b.obj[reg.get("QHat", lid, j)] = w

    model = MilpModel(
        registry=reg,
        lo=np.array(b.lo),
        hi=np.array(b.hi),
        binary=np.array([t.kind in BINARY_KINDS for t in reg.tags]),
        A=sp.csr_matrix((b.rows_v, (b.rows_i, b.rows_j)), shape=(len(b.rhs), len(b.lo))),
        sense=np.array(b.sense),
        rhs=np.array(b.rhs),
        row_names=b.names,
        row_family=b.family,
        c=np.array(b.obj),
        big_m=big_m,
        eps=eps,
        net=net,
        grid=grid,
        options=options,
    )
    for k, (lid, c) in enumerate(options.bounded_shock):
        model = add_bounded_shock(model, lid, c, soft=options.objective == "soft_bounded_shock", index=k)
    return model


def _add_min_green(b: _Builder, net: Network, grid: TimeGrid, g: int) -> None:
    n = grid.n_steps
    for jn in net.junctions:
        u = [b.reg.get("U", jn.id, j, 0) for j in range(n)]
        for t in range(1, n):
            for tau in range(t + 1, min(t + g, n)):
                name = b.tname(jn.id, t, f"_K{tau - t}")
                b.row("min_green", name + "_ON", [(u[tau], 1.0), (u[t], -1.0), (u[t - 1], 1.0)], ">", 0.0)
                b.row("min_green", name + "_OFF", [(u[tau], 1.0), (u[t], -1.0), (u[t - 1], 1.0)], "<", 1.0)


def shock_offsets(net: Network, grid: TimeGrid, link_id: str, c: float) -> tuple[int, int]:
    """Whole-step travel times from the entrance to c and from the exit back to c."""
    ln = net.link(link_id)
    cc, length, dt = exact(c), exact(ln.length), exact(grid.dt)
    if not (0 < cc < length):
        raise ModelError(f"bounded shock point c = {c} must lie strictly inside link {link_id}")
    fwd = cc / (exact(ln.fd.k) * dt)
    bwd = (length - cc) / (exact(ln.fd.w) * dt)
    if fwd.denominator != 1 or bwd.denominator != 1:
        raise ModelError(
            f"bounded shock point c = {c} on link {link_id}: offsets "
            f"{float(fwd):g}, {float(bwd):g} steps are not integral"
        )
    return int(fwd), int(bwd)


def add_bounded_shock(model: MilpModel, link_id: str, c: float, soft: bool = False, index: int = 0) -> MilpModel:
    """Return a copy of ``model`` whose congestion on ``link_id`` stays in [c, L].

    One row per grid time m with a nonempty lagged entrance sum:
    ``dt*sum(q_bar[:m - dcf]) - dt*sum(q_hat[:m - dcb]) <= rho_jam * (L - c)``.
    With ``soft`` the rows get a nonnegative slack column that the objective
    penalizes instead.
    """
    net, grid = model.net, model.grid
    dcf, dcb = shock_offsets(net, grid, link_id, c)
    ln = net.link(link_id)
    n, dt = grid.n_steps, grid.dt
    reg = model.registry.copy() if soft else model.registry
    width = max(2, len(str(n - 1)))
    rhs_val = ln.fd.rho_jam * (ln.length - c)

    new_rows, new_rhs, names, new_cols = [], [], [], []
    lo, hi, c_obj = list(model.lo), list(model.hi), list(model.c)
    for m in range(1, n + 1):
        if m - dcf < 1:
            continue
        terms = {reg.get("QBar", link_id, s): dt for s in range(m - dcf)}
        for s in range(max(0, m - dcb)):
            col = reg.get("QHat", link_id, s)
            terms[col] = terms.get(col, 0.0) - dt
        if soft:
            tag = Tag("ShockSlack", link_id, index, m)
            col = reg.add(tag)
            lo.append(0.0)
            hi.append(np.inf)
            c_obj.append(-1.0)
            terms[col] = -1.0
            new_cols.append(col)
        new_rows.append(terms)
        new_rhs.append(rhs_val)
        names.append(f"BOUNDED_SHOCK_{link_id}_C{index + 1}_T{m:0{width}d}")

    n_cols = len(lo)
    A = model.A
    if n_cols > A.shape[1]:
        A = sp.hstack([A, sp.csr_matrix((A.shape[0], n_cols - A.shape[1]))]).tocsr()
    ri, rj, rv = [], [], []
    for r, terms in enumerate(new_rows):
        for col in sorted(terms):
            ri.append(r)
            rj.append(col)
            rv.append(terms[col])
    extra = sp.csr_matrix((rv, (ri, rj)), shape=(len(new_rows), n_cols))
    binary = np.concatenate([model.binary, np.zeros(n_cols - len(model.binary), bool)])
    return MilpModel(
        registry=reg,
        lo=np.array(lo),
        hi=np.array(hi),
        binary=binary,
        A=sp.vstack([A, extra]).tocsr(),
        sense=np.concatenate([model.sense, np.array(["<"] * len(new_rows))]),
        rhs=np.concatenate([model.rhs, np.array(new_rhs)]),
        row_names=model.row_names + names,
        row_family=model.row_family + ["bounded_shock"] * len(new_rows),
        c=np.array(c_obj),
        big_m=model.big_m,
        eps=model.eps,
        net=net,
        grid=grid,
        options=model.options,
    )


def expected_row_counts(net: Network, grid: TimeGrid, options: MilpOptions) -> Counter:
    """Closed-form row count per family, from the topology and offsets alone."""
    n = grid.n_steps
    counts: Counter = Counter()
    for ln in net.links:
        df, db = offsets(ln, grid)
        counts["regime_up"] += 2 * max(0, n - db)
        counts["regime_down"] += 2 * max(0, n - df)
        counts["supply"] += 4 * n
        counts["demand"] += 4 * n
        counts["send_cap"] += 4 * n
        counts["recv_cap"] += (2 if net.inflow(ln.id) is not None else 4) * n
        if net.downstream_junction(ln.id) is None:
            counts["exit"] += n
    for jn in net.junctions:
        nonzero = sum(1 for row in jn.alpha for a in row if a > 0)
        counts["min_beta"] += 2 * nonzero * n
        counts["min_zeta"] += 8 * n
        counts["gating"] += 6 * n
        counts["turning"] += 2 * n
        counts["exclusivity"] += n
        if options.min_green > 1:
            g = options.min_green
            counts["min_green"] += 2 * sum(min(t + g, n) - (t + 1) for t in range(1, n))
    for lid, c in options.bounded_shock:
        dcf, _ = shock_offsets(net, grid, lid, c)
        counts["bounded_shock"] += max(0, n - dcf)
    return +counts


def audit(model: MilpModel) -> dict[str, tuple[int, int]]:
    """Families whose emitted row count differs from the closed form."""
    want = expected_row_counts(model.net, model.grid, model.options)
    have = model.family_counts()
    return {f: (have.get(f, 0), want.get(f, 0)) for f in set(want) | set(have) if have.get(f, 0) != want.get(f, 0)}


# ---------------------------------------------------------------------------
# mapping between solutions, plans and trajectories


def extract_signal_plan(model: MilpModel, x: np.ndarray, int_tol: float = 1e-6) -> SignalPlan:
    reg = model.registry
    green = {}
    for jn in model.net.junctions:
        g = []
        for j in range(model.grid.n_steps):
            vals = [float(x[reg.get("U", jn.id, j, s)]) for s in (0, 1)]
            for s, v in enumerate(vals):
                if min(abs(v), abs(v - 1.0)) > int_tol:
                    raise ExtractionError(
                        f"junction {jn.id}, step {j}: u{s + 1} = {v:g} is not within {int_tol:g} of 0 or 1"
                    )
            u1, u2 = (int(round(v)) for v in vals)
            if u1 + u2 != 1:
                raise ExtractionError(f"junction {jn.id}, step {j}: u1 + u2 = {u1 + u2}")
            g.append(0 if u1 == 1 else 1)
        green[jn.id] = np.array(g)
    return SignalPlan(green)


def extract_flows(model: MilpModel, x: np.ndarray) -> Trajectory:
    reg = model.registry
    ids = [ln.id for ln in model.net.links]
    n = model.grid.n_steps
    traj = Trajectory.zeros(ids, model.grid.dt, n)
    fields = {
        "QBar": traj.q_bar, "QHat": traj.q_hat, "RBar": traj.r_bar, "RHat": traj.r_hat,
        "QBarMax": traj.q_bar_max, "QHatMax": traj.q_hat_max, "Send": traj.send, "Recv": traj.recv,
    }
    for i, lid in enumerate(ids):
        for kind, arr in fields.items():
            for j in range(n):
                tag = Tag(kind, lid, -1, j)
                if tag not in reg:
                    continue
                v = float(x[reg[tag]])
                arr[i, j] = int(round(v)) if arr.dtype.kind == "i" else v
        if Tag("Recv", lid, -1, 0) not in reg:
            traj.recv[i] = traj.q_bar[i]
    traj.recompute_curves()
    return traj


def solution_from_trajectory(model: MilpModel, traj: Trajectory, plan: SignalPlan) -> np.ndarray:
    """Column vector reproducing a simulated trajectory under ``plan``.

    Auxiliary selector columns are set to the branch the simulator took, so
    the vector is feasible whenever the simulation matches the model.
    """
    reg = model.registry
    x = np.zeros(model.n_cols)
    n = model.grid.n_steps
    fields = {
        "QBar": traj.q_bar, "QHat": traj.q_hat, "RBar": traj.r_bar, "RHat": traj.r_hat,
        "QBarMax": traj.q_bar_max, "QHatMax": traj.q_hat_max, "Send": traj.send, "Recv": traj.recv,
    }
    for i, lid in enumerate(traj.link_ids):
        for j in range(n):
            for kind, arr in fields.items():
                tag = Tag(kind, lid, -1, j)
                if tag in reg:
                    x[reg[tag]] = arr[i, j]
            x[reg.get("SendSel", lid, j)] = 0.0 if traj.send[i, j] >= traj.q_hat_max[i, j] else 1.0
            tag = Tag("RecvSel", lid, -1, j)
            if tag in reg:
                x[reg[tag]] = 0.0 if traj.recv[i, j] >= traj.q_bar_max[i, j] else 1.0
    for jn in model.net.junctions:
        o3, o4 = (traj.index(o) for o in jn.outgoing)
        for j in range(n):
            for slot in (0, 1):
                a3, a4 = jn.alpha[slot]
                t3 = traj.recv[o3, j] / a3 if a3 > 0 else np.inf
                t4 = traj.recv[o4, j] / a4 if a4 > 0 else np.inf
                beta = min(t3, t4)
                send = traj.send[traj.index(jn.incoming[slot]), j]
                zeta = min(send, beta)
                x[reg.get("Beta", jn.id, j, slot)] = beta
                x[reg.get("Xi", jn.id, j, slot)] = 0.0 if t3 <= t4 else 1.0
                x[reg.get("Zeta", jn.id, j, slot)] = zeta
                x[reg.get("Eta", jn.id, j, slot)] = 0.0 if send <= beta else 1.0
                x[reg.get("U", jn.id, j, slot)] = 1.0 if plan.green[jn.id][j] == slot else 0.0
    if any(t.kind == "ShockSlack" for t in reg.tags):
        viol = model.row_violations(x)
        for r, (fam, name) in enumerate(zip(model.row_family, model.row_names)):
            if fam != "bounded_shock":
                continue
            row = model.A.getrow(r)
            for col, v in zip(row.indices, row.data):
                if reg.tags[col].kind == "ShockSlack" and v < 0:
                    x[col] = viol[r] / -v
    return x
