"""Stage-one phase selection: the waiting-vehicle rule plus the classical
phase policies used as baselines (fixed-time plans, max-pressure, round
robin)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PhaseDecision:
    phase: int
    waiting: np.ndarray   # waiting-vehicle total per phase


def fuzzy_phase_select(counts: np.ndarray,
                       phase_lanes: list[tuple[int, ...]]) -> PhaseDecision:
    """Pick the phase whose lanes hold the most recovered waiting vehicles.

    ``counts`` is the defuzzified lane x slice matrix; ``phase_lanes`` maps
    each phase to the indices of the lanes it serves. Ties break to the
    lowest phase index.
    """
    if not phase_lanes:
        raise ValueError("phase set must not be empty")
    counts = np.asarray(counts)
    if counts.min(initial=0) < 0:
        raise ValueError("recovered counts must be nonnegative")
    per_lane = counts.sum(axis=1) if counts.ndim == 2 else counts
    waiting = np.array(
        [sum(int(per_lane[i]) for i in lanes) for lanes in phase_lanes],
        dtype=np.int64,
    )
    return PhaseDecision(phase=int(np.argmax(waiting)), waiting=waiting)


def max_pressure_select(upstream_queue: np.ndarray, downstream_queue: np.ndarray,
                        phase_lanes: list[tuple[int, ...]]) -> PhaseDecision:
    """Max-pressure rule: per movement, pressure = upstream queue minus the
    queue on the link it feeds (zero at the boundary); pick the phase with
    the largest summed pressure, lowest index on ties."""
    if not phase_lanes:
        raise ValueError("phase set must not be empty")
    pressure = np.asarray(upstream_queue, dtype=np.int64) - np.asarray(
        downstream_queue, dtype=np.int64)
    score = np.array(
        [sum(int(pressure[i]) for i in lanes) for lanes in phase_lanes],
        dtype=np.int64,
    )
    return PhaseDecision(phase=int(np.argmax(score)), waiting=score)


class FixedTimePlan:
    """Deterministic cycle through a list of (phase, duration) entries."""

    def __init__(self, plan: list[tuple[int, int]]):
        if not plan:
            raise ValueError("fixed-time plan must not be empty")
        self.plan = [(int(p), int(d)) for p, d in plan]
        self._pos = 0

    def next_decision(self) -> tuple[int, int]:
        entry = self.plan[self._pos]
        self._pos = (self._pos + 1) % len(self.plan)
        return entry

    def reset(self) -> None:
        self._pos = 0


class PhaseCycler:
    """Round-robin phase advance regardless of traffic."""

    def __init__(self, phase_count: int):
        if phase_count < 1:
            raise ValueError("need at least one phase")
        self.phase_count = phase_count
        self._next = 0

    def next_phase(self) -> int:
        phase = self._next
        self._next = (self._next + 1) % self.phase_count
        return phase

    def reset(self) -> None:
        self._next = 0
