"""Figures written next to the CSV outputs (headless backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .kinematics import SignalPlan, Trajectory  # noqa: E402

_META = {"Software": None}  # keeps PNG bytes stable across matplotlib builds


def _save(fig, path: Path) -> None:
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)


def plot_cumulative(traj: Trajectory, path: Path, links: Sequence[str] | None = None) -> None:
    """Entrance and exit counts of each link against time."""
    links = list(links or traj.link_ids)
    cols = min(4, len(links))
    rows = int(np.ceil(len(links) / cols))
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.6 * rows), squeeze=False, sharex=True)
    t = np.arange(traj.n_steps + 1) * traj.dt
    for ax, lid in zip(axes.flat, links):
        i = traj.index(lid)
        ax.plot(t, traj.n_up[i], drawstyle="default", label="entrance")
        ax.plot(t, traj.n_down[i], linestyle="--", label="exit")
        ax.set_title(lid, fontsize=9)
        ax.tick_params(labelsize=7)
    for ax in list(axes.flat)[len(links):]:
        ax.axis("off")
    axes.flat[0].legend(fontsize=7, loc="upper left")
    fig.supxlabel("time (h)", fontsize=9)
    fig.supylabel("cumulative vehicles", fontsize=9)
    fig.tight_layout()
    _save(fig, path)


def plot_moskowitz(times: np.ndarray, xs: np.ndarray, values: np.ndarray, xstar: np.ndarray,
                   link: str, path: Path) -> None:
    """Moskowitz surface N(t, x) as a filled contour with the shock path on top."""
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    T, X = np.meshgrid(times, xs, indexing="ij")
    levels = 24 if np.ptp(values) > 0 else 1
    cs = ax.contourf(T, X, values, levels=levels, cmap="viridis")
    fig.colorbar(cs, ax=ax, label="N (veh)")
    ax.plot(times, xstar, color="white", linewidth=1.2, label="shock x*(t)")
    ax.set_xlabel("time (h)")
    ax.set_ylabel("distance from entrance (mi)")
    ax.set_title(f"link {link}")
    ax.legend(loc="lower left", fontsize=7)
    fig.tight_layout()
    _save(fig, path)


def plot_plan(plan: SignalPlan, dt: float, path: Path) -> None:
    jids = sorted(plan.green)
    fig, ax = plt.subplots(figsize=(5.5, 0.8 + 0.6 * len(jids)))
    for k, jid in enumerate(jids):
        g = np.asarray(plan.green[jid])
        t = np.arange(len(g) + 1) * dt
        ax.stairs(k + 0.8 * g, t, baseline=k, fill=True, alpha=0.6)
    ax.set_yticks(np.arange(len(jids)) + 0.4, [f"{j} (high = slot 2)" for j in jids], fontsize=8)
    ax.set_xlabel("time (h)")
    fig.tight_layout()
    _save(fig, path)
