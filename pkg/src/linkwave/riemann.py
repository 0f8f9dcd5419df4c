"""Flow/regime states and the closed-form junction solver for one discharging link."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .network import FundamentalDiagram, capacity

FLOW_TIE = 1e-9  # veh/h; |q_hat - q0| below this counts as equality


@dataclass(frozen=True)
class PhaseState:
    """Boundary state as (flow, regime bit); r = 0 free flow, r = 1 congested."""

    q: float
    r: int

    def __post_init__(self) -> None:
        if self.r not in (0, 1):
            raise ValueError(f"regime bit must be 0 or 1, got {self.r!r}")
        if self.q < 0:
            raise ValueError(f"negative flow {self.q}")


@dataclass(frozen=True)
class JunctionResolution:
    q_hat_in: float
    r_hat_in: int
    q_bar_out: tuple[float, ...]
    r_bar_out: tuple[int, ...]


def density_of(state: PhaseState, fd: FundamentalDiagram) -> float:
    cap = capacity(fd)
    if state.q > cap * (1 + 1e-12):
        raise ValueError(f"flow {state.q} exceeds capacity {cap}")
    if state.r == 0:
        return state.q / fd.k
    return fd.rho_jam - state.q / fd.w


def demand(state: PhaseState, cap: float) -> float:
    """Largest flow an incoming link can send from its exit."""
    return state.q + state.r * (cap - state.q)


def supply(state: PhaseState, cap: float) -> float:
    """Largest flow an outgoing link can accept at its entrance."""
    return cap + state.r * (state.q - cap)


def limit_flow(send: float, receives: Sequence[float], alpha_row: Sequence[float]) -> float:
    """min(send, receive_j / alpha_j) over the turning movements with alpha_j > 0."""
    q = send
    for rec, a in zip(receives, alpha_row):
        if a > 0:
            q = min(q, rec / a)
    return q


def solve_junction(
    active_in: PhaseState,
    outgoing: Sequence[PhaseState],
    alpha_row: Sequence[float],
    capacities: Sequence[float],
) -> JunctionResolution:
    """Boundary states at a junction where only ``active_in`` may discharge.

    ``capacities`` lists the incoming link first, then each outgoing link.
    """
    if len(outgoing) != len(alpha_row) or len(capacities) != len(outgoing) + 1:
        raise ValueError("outgoing, alpha_row and capacities do not line up")
    if abs(math.fsum(alpha_row) - 1.0) > 1e-12:
        raise ValueError(f"alpha row sums to {math.fsum(alpha_row)}")

    q_hat = limit_flow(
        demand(active_in, capacities[0]),
        [supply(s, c) for s, c in zip(outgoing, capacities[1:])],
        alpha_row,
    )

    if active_in.r == 1 or q_hat < active_in.q - FLOW_TIE:
        r_in = 1
    else:
        r_in = 0

    q_out = tuple(a * q_hat for a in alpha_row)
    r_out = tuple(
        1 if (s.r == 1 and abs(qo - s.q) <= FLOW_TIE) else 0
        for s, qo in zip(outgoing, q_out)
    )
    return JunctionResolution(q_hat, r_in, q_out, r_out)
