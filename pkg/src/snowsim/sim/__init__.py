"""Discrete-event simulator of mobile SNOW nodes."""

from .engine import Simulation, run
from .metrics import MetricsReport
from .mobility import step_mobility
from .model import (
    ASSOCIATED,
    ALIGNING,
    DISCOVERING,
    JOINING,
    OUT_OF_RANGE,
    BaseStationState,
    EnergyLedger,
    EnergyModel,
    EventQueue,
    HandoffRecord,
    LinkBudget,
    NodeState,
)
from .phy import packet_error_probability

__all__ = [
    "ASSOCIATED", "ALIGNING", "DISCOVERING", "JOINING", "OUT_OF_RANGE",
    "BaseStationState", "EnergyLedger", "EnergyModel", "EventQueue", "HandoffRecord", "LinkBudget",
    "MetricsReport", "NodeState", "Simulation", "packet_error_probability", "run", "step_mobility",
]
