"""Link-level kinematic wave traffic model with signal-timing optimization."""

__version__ = "0.1.0"

from .kinematics import CumulativeCurves, SignalPlan, SimulationError, Trajectory, simulate  # noqa: E402
from .milp import MilpModel, MilpOptions, build_model  # noqa: E402
from .network import FundamentalDiagram, JunctionSpec, LinkSpec, Network, TimeGrid, validate_network  # noqa: E402

__all__ = [
    "CumulativeCurves",
    "FundamentalDiagram",
    "JunctionSpec",
    "LinkSpec",
    "MilpModel",
    "MilpOptions",
    "Network",
    "SignalPlan",
    "SimulationError",
    "TimeGrid",
    "Trajectory",
    "build_model",
    "simulate",
    "validate_network",
]
