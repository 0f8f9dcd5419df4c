"""Road network data model: links, signalized junctions, time grid, inflows.

Geometry and wave speeds are checked with exact rational arithmetic so that
the integrality of the travel-time offsets does not depend on float rounding.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import yaml

ROLES = ("source", "internal", "sink")
ALPHA_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when a network is used before its violations are fixed."""


def exact(value: float | int | str | Fraction) -> Fraction:
    """Rational value of a decimal literal (0.3 -> 3/10, not the binary float)."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, np.integer)):
        return Fraction(int(value))
    if isinstance(value, (float, np.floating)):
        return Fraction(repr(float(value)))
    return Fraction(str(value).strip())


@dataclass(frozen=True)
class FundamentalDiagram:
    """Triangular flow-density relation."""

    k: float
    w: float
    rho_jam: float

    @property
    def rho_star(self) -> float:
        return self.rho_jam * self.w / (self.k + self.w)

    @property
    def capacity(self) -> float:
        return capacity(self)

    def flow(self, rho: float) -> float:
        if rho <= self.rho_star:
            return self.k * rho
        return -self.w * (rho - self.rho_jam)


def capacity(fd: FundamentalDiagram) -> float:
    """Peak flow of the triangular diagram, k * rho_jam * w / (k + w)."""
    return fd.k * fd.rho_jam * fd.w / (fd.k + fd.w)


@dataclass(frozen=True)
class LinkSpec:
    id: str
    length: float
    fd: FundamentalDiagram
    role: str = "internal"

    @property
    def capacity(self) -> float:
        return capacity(self.fd)

    @property
    def jam_storage(self) -> float:
        """Vehicles held by the link at jam density."""
        return self.fd.rho_jam * self.length


@dataclass(frozen=True)
class JunctionSpec:
    id: str
    incoming: tuple[str, str]
    outgoing: tuple[str, str]
    alpha: tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    n_steps: int

    @property
    def horizon(self) -> float:
        return self.dt * self.n_steps


@dataclass(frozen=True)
class InflowProfile:
    link: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class Violation:
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.subject}: {self.message}"


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)
    offsets: dict[str, tuple[int, int]] = field(default_factory=dict)  # link -> (delta_f, delta_b)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, subject: str, message: str) -> None:
        self.violations.append(Violation(subject, message))

    def __bool__(self) -> bool:  # truthy when there is something to report
        return bool(self.violations)

    def __str__(self) -> str:
        return "\n".join(str(v) for v in self.violations) or "valid"


@dataclass(frozen=True)
class Network:
    links: tuple[LinkSpec, ...]
    junctions: tuple[JunctionSpec, ...]
    inflows: tuple[InflowProfile, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "junctions", tuple(self.junctions))
        object.__setattr__(self, "inflows", tuple(self.inflows))

    def link(self, link_id: str) -> LinkSpec:
        for ln in self.links:
            if ln.id == link_id:
                return ln
        raise KeyError(f"unknown link {link_id!r}")

    def link_index(self) -> dict[str, int]:
        return {ln.id: i for i, ln in enumerate(self.links)}

    def inflow(self, link_id: str) -> InflowProfile | None:
        for prof in self.inflows:
            if prof.link == link_id:
                return prof
        return None

    def downstream_junction(self, link_id: str) -> tuple[JunctionSpec, int] | None:
        """Junction the link discharges into, with its incoming slot (0 or 1)."""
        for jn in self.junctions:
            if link_id in jn.incoming:
                return jn, jn.incoming.index(link_id)
        return None

    def upstream_junction(self, link_id: str) -> tuple[JunctionSpec, int] | None:
        for jn in self.junctions:
            if link_id in jn.outgoing:
                return jn, jn.outgoing.index(link_id)
        return None

    def exit_links(self) -> list[str]:
        """Links without a downstream junction; they discharge freely."""
        return [ln.id for ln in self.links if self.downstream_junction(ln.id) is None]

    def with_inflows(self, inflows: Iterable[InflowProfile]) -> "Network":
        return Network(self.links, self.junctions, tuple(inflows))


def offsets(link: LinkSpec, grid: TimeGrid) -> tuple[int, int]:
    """Free-flow and backward-wave travel times of ``link`` in whole steps."""
    dt = exact(grid.dt)
    fwd = exact(link.length) / (exact(link.fd.k) * dt)
    bwd = exact(link.length) / (exact(link.fd.w) * dt)
    for name, ratio in (("delta_f", fwd), ("delta_b", bwd)):
        if ratio.denominator != 1 or ratio <= 0:
            raise ValidationError(
                f"link {link.id}: {name} = {float(ratio):g} not a positive integer"
            )
    return int(fwd), int(bwd)


def validate_network(net: Network, grid: TimeGrid) -> ValidationReport:
    report = ValidationReport()

    if not grid.dt > 0:
        report.add("grid", f"dt = {grid.dt} must be positive")
    if not (isinstance(grid.n_steps, int) and grid.n_steps > 0):
        report.add("grid", f"n_steps = {grid.n_steps} must be a positive integer")

    ids = [ln.id for ln in net.links]
    for dup in sorted({i for i in ids if ids.count(i) > 1}):
        report.add(dup, "duplicate link id")
    jids = [jn.id for jn in net.junctions]
    for dup in sorted({i for i in jids if jids.count(i) > 1}):
        report.add(dup, "duplicate junction id")
    known = set(ids)

    for ln in net.links:
        fd = ln.fd
        if not (fd.k > 0 and fd.w > 0 and fd.rho_jam > 0):
            report.add(ln.id, "k, w and rho_jam must be positive")
            continue
        if not ln.length > 0:
            report.add(ln.id, f"length {ln.length} must be positive")
            continue
        if ln.role not in ROLES:
            report.add(ln.id, f"role {ln.role!r} not one of {ROLES}")
        if grid.dt > 0:
            dt = exact(grid.dt)
            whole = []
            for sym, speed in (("delta_f", fd.k), ("delta_b", fd.w)):
                ratio = exact(ln.length) / (exact(speed) * dt)
                if ratio.denominator != 1:
                    report.add(ln.id, f"{sym} = {float(ratio):g} not integral")
                else:
                    whole.append(int(ratio))
            if len(whole) == 2:
                report.offsets[ln.id] = (whole[0], whole[1])

    n_down = {i: 0 for i in ids}
    n_up = {i: 0 for i in ids}
    for jn in net.junctions:
        if len(jn.incoming) != 2 or len(jn.outgoing) != 2:
            report.add(jn.id, "signalized junctions need exactly 2 incoming and 2 outgoing links")
            continue
        for lid in (*jn.incoming, *jn.outgoing):
            if lid not in known:
                report.add(jn.id, f"references unknown link {lid!r}")
        if len(set(jn.incoming) | set(jn.outgoing)) != 4:
            report.add(jn.id, "a link is attached to the junction twice")
        for lid in jn.incoming:
            if lid in n_down:
                n_down[lid] += 1
        for lid in jn.outgoing:
            if lid in n_up:
                n_up[lid] += 1
        if len(jn.alpha) != 2 or any(len(row) != 2 for row in jn.alpha):
            report.add(jn.id, "alpha must be a 2x2 matrix")
            continue
        for r, row in enumerate(jn.alpha):
            if any(not (0.0 <= a <= 1.0) for a in row):
                report.add(jn.id, f"alpha row {r + 1} has entries outside [0, 1]")
            total = math.fsum(row)
            if abs(total - 1.0) > ALPHA_TOL:
                report.add(jn.id, f"alpha row {r + 1} row sum {total:g}")

    inflow_links = [p.link for p in net.inflows]
    for dup in sorted({i for i in inflow_links if inflow_links.count(i) > 1}):
        report.add(dup, "more than one inflow profile")

    for ln in net.links:
        if n_down[ln.id] > 1:
            report.add(ln.id, "discharges into more than one junction")
        if n_up[ln.id] > 1:
            report.add(ln.id, "fed by more than one junction")
        has_inflow = ln.id in inflow_links
        if ln.role == "source":
            if n_up[ln.id]:
                report.add(ln.id, "source link must not be fed by a junction")
            if not has_inflow:
                report.add(ln.id, "source link has no inflow profile")
        elif ln.role == "sink":
            if n_down[ln.id]:
                report.add(ln.id, "sink link must not have a downstream junction")
            if not n_up[ln.id]:
                report.add(ln.id, "sink link is not fed by any junction")
        elif ln.role == "internal":
            if n_up[ln.id] != 1 or n_down[ln.id] != 1:
                report.add(ln.id, "internal link needs exactly one upstream and one downstream junction")
        if has_inflow and ln.role != "source":
            report.add(ln.id, "inflow given for a non-source link")

    for prof in net.inflows:
        if prof.link not in known:
            report.add(prof.link, "inflow for unknown link")
            continue
        if len(prof.values) != grid.n_steps:
            report.add(prof.link, f"inflow has {len(prof.values)} values, expected {grid.n_steps}")
        cap = net.link(prof.link).capacity
        for j, v in enumerate(prof.values):
            if not (0.0 <= v <= cap + 1e-9):
                report.add(prof.link, f"inflow {v:g} at step {j} outside [0, {cap:g}]")

    cycle = _internal_cycle(net)
    if cycle:
        report.add(cycle[0], "internal links form a cycle: " + " -> ".join(cycle))
    return report


def _internal_cycle(net: Network) -> list[str]:
    """Junction ids along a cycle of internal links, or [] if acyclic."""
    succ: dict[str, list[str]] = {jn.id: [] for jn in net.junctions}
    for jn in net.junctions:
        for lid in jn.outgoing:
            for other in net.junctions:
                if lid in other.incoming:
                    succ[jn.id].append(other.id)
    state: dict[str, int] = {}
    path: list[str] = []

    def visit(node: str) -> list[str]:
        state[node] = 1
        path.append(node)
        for nxt in succ.get(node, []):
            if state.get(nxt) == 1:
                return path[path.index(nxt):] + [nxt]
            if nxt not in state:
                found = visit(nxt)
                if found:
                    return found
        state[node] = 2
        path.pop()
        return []

    for jid in sorted(succ):
        if jid not in state:
            found = visit(jid)
            if found:
                return found
    return []


def require_valid(net: Network, grid: TimeGrid) -> None:
    report = validate_network(net, grid)
    if report:
        raise ValidationError(str(report))


# --------------------------------------------------------------------------
# config files


@dataclass(frozen=True)
class Scenario:
    """A network config as loaded from disk."""

    network: Network
    grid: TimeGrid
    options: dict[str, Any]
    path: Path | None = None
    digest: str = ""


def _fd_from(entry: dict[str, Any]) -> FundamentalDiagram:
    return FundamentalDiagram(
        k=float(entry["k_mph"]), w=float(entry["w_mph"]), rho_jam=float(entry["rho_jam_vpm"])
    )


def network_from_dict(doc: dict[str, Any], base_dir: Path | None = None) -> tuple[Network, TimeGrid, dict]:
    grid_doc = doc.get("grid") or {}
    grid = TimeGrid(dt=float(grid_doc["dt_hours"]), n_steps=int(grid_doc["n_steps"]))
    links = [
        LinkSpec(
            id=str(e["id"]),
            length=float(e["length_miles"]),
            fd=_fd_from(e),
            role=str(e.get("role", "internal")),
        )
        for e in doc.get("links", [])
    ]
    junctions = [
        JunctionSpec(
            id=str(e["id"]),
            incoming=tuple(str(x) for x in e["incoming"]),
            outgoing=tuple(str(x) for x in e["outgoing"]),
            alpha=tuple(tuple(float(a) for a in row) for row in e["alpha"]),
        )
        for e in doc.get("junctions", [])
    ]
    inflows: list[InflowProfile] = []
    for e in doc.get("inflows", []) or []:
        if "csv" in e:
            inflows.extend(read_inflow_csv(_resolve(e["csv"], base_dir), only=e.get("link")))
        else:
            inflows.append(InflowProfile(str(e["link"]), tuple(float(v) for v in e["values"])))
    if doc.get("inflows_csv"):
        inflows.extend(read_inflow_csv(_resolve(doc["inflows_csv"], base_dir)))
    options = dict(doc.get("options") or {})
    return Network(tuple(links), tuple(junctions), tuple(inflows)), grid, options


def _resolve(name: str, base_dir: Path | None) -> Path:
    p = Path(name)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    return p


def read_inflow_csv(path: Path, only: str | None = None) -> list[InflowProfile]:
    """One column per source link, one row per step, header = link id."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    header, body = rows[0], rows[1:]
    out = []
    for c, lid in enumerate(header):
        lid = lid.strip()
        if only is not None and lid != only:
            continue
        out.append(InflowProfile(lid, tuple(float(r[c]) for r in body)))
    return out


def write_inflow_csv(path: Path, inflows: Sequence[InflowProfile]) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("# linkwave-inflows v1\n")
        wr = csv.writer(fh)
        wr.writerow([p.link for p in inflows])
        for row in zip(*(p.values for p in inflows)):
            wr.writerow([f"{v:.9g}" for v in row])


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    raw = path.read_bytes()
    doc = yaml.safe_load(raw) or {}
    net, grid, options = network_from_dict(doc, base_dir=path.parent)
    digest = hashlib.sha256(raw).hexdigest()
    for prof_doc in doc.get("inflows", []) or []:
        if "csv" in prof_doc:
            digest = hashlib.sha256(
                raw + _resolve(prof_doc["csv"], path.parent).read_bytes()
            ).hexdigest()
    if doc.get("inflows_csv"):
        digest = hashlib.sha256(
            raw + _resolve(doc["inflows_csv"], path.parent).read_bytes()
        ).hexdigest()
    return Scenario(net, grid, options, path, digest)


def network_to_dict(net: Network, grid: TimeGrid, options: dict | None = None) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "grid": {"dt_hours": grid.dt, "n_steps": grid.n_steps},
        "links": [
            {
                "id": ln.id,
                "length_miles": ln.length,
                "k_mph": ln.fd.k,
                "w_mph": ln.fd.w,
                "rho_jam_vpm": ln.fd.rho_jam,
                "role": ln.role,
            }
            for ln in net.links
        ],
        "junctions": [
            {
                "id": jn.id,
                "incoming": list(jn.incoming),
                "outgoing": list(jn.outgoing),
                "alpha": [list(r) for r in jn.alpha],
            }
            for jn in net.junctions
        ],
        "inflows": [{"link": p.link, "values": list(p.values)} for p in net.inflows],
    }
    if options:
        doc["options"] = options
    return doc
