"""Deterministic grid microsimulator."""

from .engine import (
    EpisodeResult, FlowSpec, IntersectionState, SignalRuntime, Simulator,
    Vehicle, STOP_SPEED,
)
from .network import (
    APPROACHES, TURNS, IntersectionSpec, LaneId, Movement, PhaseSpec,
    RoadNetwork, Route, eight_phase_set, four_phase_set, phase_set,
)

__all__ = [
    "EpisodeResult", "FlowSpec", "IntersectionState", "SignalRuntime",
    "Simulator", "Vehicle", "STOP_SPEED",
    "APPROACHES", "TURNS", "IntersectionSpec", "LaneId", "Movement",
    "PhaseSpec", "RoadNetwork", "Route", "eight_phase_set", "four_phase_set",
    "phase_set",
]
