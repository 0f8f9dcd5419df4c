"""Bundled two-intersection scenario and seeded scenario generators."""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from .network import (
    FundamentalDiagram,
    InflowProfile,
    JunctionSpec,
    LinkSpec,
    Network,
    Scenario,
    TimeGrid,
    load_scenario,
)

PRNG = "numpy.PCG64"
FIXTURE_FD = FundamentalDiagram(k=30.0, w=10.0, rho_jam=400.0)
FIXTURE_LENGTH = 0.3
FIXTURE_GRID = TimeGrid(dt=0.005, n_steps=20)
FIXTURE_SEED = 1


def fixture_path() -> Path:
    return Path(str(resources.files("linkwave") / "data" / "two_junctions.yaml"))


def load_fixture() -> Scenario:
    return load_scenario(fixture_path())


def two_junction_network(
    inflows: dict[str, np.ndarray] | None = None,
    fd: FundamentalDiagram = FIXTURE_FD,
    lengths: dict[str, float] | None = None,
    alpha1=((0.5, 0.5), (0.5, 0.5)),
    alpha2=((0.5, 0.5), (0.5, 0.5)),
) -> Network:
    """Seven links, two signalized junctions; I5 carries traffic from J1 to J2."""
    lengths = lengths or {}
    roles = {"I1": "source", "I2": "source", "I3": "source", "I4": "sink",
             "I5": "internal", "I6": "sink", "I7": "sink"}
    links = tuple(LinkSpec(lid, lengths.get(lid, FIXTURE_LENGTH), fd, role) for lid, role in roles.items())
    junctions = (
        JunctionSpec("J1", ("I1", "I2"), ("I4", "I5"), alpha1),
        JunctionSpec("J2", ("I3", "I5"), ("I6", "I7"), alpha2),
    )
    profiles = tuple(InflowProfile(k, tuple(float(v) for v in inflows[k])) for k in sorted(inflows or {}))
    return Network(links, junctions, profiles)


def one_junction_network(
    inflows: dict[str, np.ndarray] | None = None,
    fd: FundamentalDiagram = FIXTURE_FD,
    length: float = FIXTURE_LENGTH,
    alpha=((0.5, 0.5), (0.5, 0.5)),
) -> Network:
    roles = {"I1": "source", "I2": "source", "I3": "sink", "I4": "sink"}
    links = tuple(LinkSpec(lid, length, fd, role) for lid, role in roles.items())
    junctions = (JunctionSpec("J", ("I1", "I2"), ("I3", "I4"), alpha),)
    profiles = tuple(InflowProfile(k, tuple(float(v) for v in inflows[k])) for k in sorted(inflows or {}))
    return Network(links, junctions, profiles)


def random_inflows(seed: int, links, n_steps: int, high: float = 3000.0, low: float = 0.0,
                   decimals: int | None = 0) -> dict[str, np.ndarray]:
    """Per-step flows drawn uniformly from [low, high] with a named, seeded PRNG."""
    rng = np.random.Generator(np.random.PCG64(seed))
    out = {}
    for lid in links:
        v = rng.uniform(low, high, size=n_steps)
        out[lid] = np.round(v, decimals) if decimals is not None else v
    return out


def random_plan_array(rng: np.random.Generator, n_steps: int, switch_prob: float = 0.5) -> np.ndarray:
    g = np.empty(n_steps, dtype=int)
    g[0] = rng.integers(2)
    for j in range(1, n_steps):
        g[j] = 1 - g[j - 1] if rng.random() < switch_prob else g[j - 1]
    return g
