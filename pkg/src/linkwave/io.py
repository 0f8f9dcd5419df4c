"""Versioned text formats for plans, flows, grids and run manifests.

Every file starts with a ``# linkwave-<kind> v1`` line.  Numbers are written
with 9 significant digits so that reruns produce identical bytes.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .kinematics import SignalPlan, Trajectory
from .network import Network

FORMAT_VERSION = "v1"


class FormatError(ValueError):
    pass


def fmt(v: float) -> str:
    return f"{float(v):.9g}"


def _header(kind: str) -> str:
    return f"# linkwave-{kind} {FORMAT_VERSION}\n"


def _read_rows(path: Path, kind: str) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith(f"# linkwave-{kind}"):
            raise FormatError(f"{path}: expected a '# linkwave-{kind} v1' header line")
        if first.split()[-1] != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported {kind} format version {first.split()[-1]!r}")
        lines = [ln for ln in fh if ln.strip() and not ln.startswith("#")]
    return list(csv.DictReader(lines))


# ---- signal plans


def write_plan(path: Path, plan: SignalPlan) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header("plan"))
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["step", "junction", "green_slot"])
        n = min(len(g) for g in plan.green.values()) if plan.green else 0
        for j in range(n):
            for jid in sorted(plan.green):
                wr.writerow([j, jid, int(plan.green[jid][j]) + 1])


def read_plan(path: Path, net: Network, n_steps: int) -> SignalPlan:
    """Read a plan given either as ``green_slot`` (1 or 2) or as ``u1,u2`` indicator columns."""
    rows = _read_rows(Path(path), "plan")
    green = {jn.id: np.full(n_steps, -1, dtype=int) for jn in net.junctions}
    for r in rows:
        jid = r["junction"].strip()
        if jid not in green:
            raise FormatError(f"plan names unknown junction {jid!r}")
        j = int(r["step"])
        if not 0 <= j < n_steps:
            raise FormatError(f"plan step {j} outside 0..{n_steps - 1}")
        if r.get("green_slot") not in (None, ""):
            slot = int(r["green_slot"])
            if slot not in (1, 2):
                raise FormatError(f"junction {jid}, step {j}: green_slot must be 1 or 2, got {slot}")
            green[jid][j] = slot - 1
        else:
            u1, u2 = int(r["u1"]), int(r["u2"])
            if {u1, u2} - {0, 1} or u1 + u2 != 1:
                raise FormatError(f"junction {jid}, step {j}: u1 = {u1}, u2 = {u2}; exactly one phase must be green")
            green[jid][j] = 0 if u1 == 1 else 1
    for jid, g in green.items():
        missing = np.flatnonzero(g < 0)
        if missing.size:
            raise FormatError(f"plan has no entry for junction {jid} at step {int(missing[0])}")
    return SignalPlan(green)


# ---- flows / trajectories


FLOW_COLUMNS = ["step", "link", "q_bar", "q_hat", "r_bar", "r_hat", "N_up", "N_down"]


def write_flows(path: Path, traj: Trajectory) -> None:
    """One row per (step, link); ``N_up``/``N_down`` are the counts at the end of the step."""
    with open(path, "w", newline="") as fh:
        fh.write(_header("flows"))
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(FLOW_COLUMNS)
        for j in range(traj.n_steps):
            for i, lid in enumerate(traj.link_ids):
                wr.writerow([
                    j, lid, fmt(traj.q_bar[i, j]), fmt(traj.q_hat[i, j]),
                    int(traj.r_bar[i, j]), int(traj.r_hat[i, j]),
                    fmt(traj.n_up[i, j + 1]), fmt(traj.n_down[i, j + 1]),
                ])


def read_flows(path: Path, link_ids: Sequence[str], dt: float, n_steps: int) -> Trajectory:
    rows = _read_rows(Path(path), "flows")
    traj = Trajectory.zeros(list(link_ids), dt, n_steps)
    seen = np.zeros((len(link_ids), n_steps), dtype=bool)
    for r in rows:
        lid = r["link"].strip()
        if lid not in traj.link_ids:
            raise FormatError(f"flows name unknown link {lid!r}")
        j = int(r["step"])
        if not 0 <= j < n_steps:
            raise FormatError(f"flows step {j} outside 0..{n_steps - 1}")
        i = traj.index(lid)
        traj.q_bar[i, j] = float(r["q_bar"])
        traj.q_hat[i, j] = float(r["q_hat"])
        traj.r_bar[i, j] = int(r.get("r_bar") or 0)
        traj.r_hat[i, j] = int(r.get("r_hat") or 0)
        seen[i, j] = True
    if not seen.all():
        i, j = np.argwhere(~seen)[0]
        raise FormatError(f"flows table is missing link {traj.link_ids[i]} at step {j}")
    traj.recompute_curves()
    return traj


# ---- Lax-Hopf grids


def write_grid(path: Path, link: str, times: np.ndarray, xs: np.ndarray, values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header("grid"))
        fh.write(f"# link {link}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t_hours", "x_miles", "N"])
        for a, t in enumerate(times):
            for b, x in enumerate(xs):
                wr.writerow([fmt(t), fmt(x), fmt(values[a, b])])


def write_shock(path: Path, link: str, times: np.ndarray, xstar: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(_header("shock"))
        fh.write(f"# link {link}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t_hours", "x_star_miles"])
        for t, x in zip(times, xstar):
            wr.writerow([fmt(t), fmt(x)])


# ---- summaries and manifests


def _clean(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(fmt(v)) if np.isfinite(v) else str(v)
    return obj


def write_json(path: Path, kind: str, payload: dict[str, Any]) -> None:
    doc = {"format": f"linkwave-{kind} {FORMAT_VERSION}", **_clean(payload)}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
