"""Grid road network: intersections, incoming lanes, phases and routes.

Conventions
-----------
Grid nodes are (row, col) with rows growing southward and columns growing
eastward. An approach is named after the compass side the traffic enters
from, so approach "N" carries southbound vehicles. Every approach has three
incoming lanes, one per movement: left, straight, right. Right turns are
uncontrolled and belong to no signal phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

APPROACHES = ("N", "E", "S", "W")
TURNS = ("L", "S", "R")

# heading of traffic on each approach, and the exit heading per movement
_HEADING = {"N": "S", "E": "W", "S": "N", "W": "E"}
_LEFT_OF = {"S": "E", "W": "S", "N": "W", "E": "N"}
_RIGHT_OF = {"S": "W", "W": "N", "N": "E", "E": "S"}
_STEP = {"N": (-1, 0), "S": (1, 0), "E": (0, 1), "W": (0, -1)}
# heading h arrives at the next node on the approach opposite to h
_ARRIVES_AT = {"N": "S", "S": "N", "E": "W", "W": "E"}


@dataclass(frozen=True)
class LaneId:
    node: tuple[int, int]
    approach: str
    turn: str

    def __str__(self) -> str:
        return f"{self.node[0]},{self.node[1]}:{self.approach}{self.turn}"


@dataclass(frozen=True)
class Movement:
    approach: str
    turn: str


@dataclass(frozen=True)
class PhaseSpec:
    """A set of simultaneously permitted (non-conflicting) movements."""

    movements: tuple[Movement, ...]
    name: str


def four_phase_set() -> list[PhaseSpec]:
    return [
        PhaseSpec((Movement("N", "S"), Movement("S", "S")), "NS-straight"),
        PhaseSpec((Movement("N", "L"), Movement("S", "L")), "NS-left"),
        PhaseSpec((Movement("E", "S"), Movement("W", "S")), "EW-straight"),
        PhaseSpec((Movement("E", "L"), Movement("W", "L")), "EW-left"),
    ]


def eight_phase_set() -> list[PhaseSpec]:
    pairs = [
        (("N", "S"), ("S", "S")), (("N", "L"), ("S", "L")),
        (("E", "S"), ("W", "S")), (("E", "L"), ("W", "L")),
        (("N", "S"), ("N", "L")), (("S", "S"), ("S", "L")),
        (("E", "S"), ("E", "L")), (("W", "S"), ("W", "L")),
    ]
    return [
        PhaseSpec((Movement(*a), Movement(*b)), f"{a[0]}{a[1]}+{b[0]}{b[1]}")
        for a, b in pairs
    ]


def phase_set(count: int) -> list[PhaseSpec]:
    if count == 4:
        return four_phase_set()
    if count == 8:
        return eight_phase_set()
    raise ValueError(f"unsupported phase count {count} (4 or 8)")


@dataclass
class IntersectionSpec:
    node: tuple[int, int]
    lane_ids: tuple[LaneId, ...]            # fixed order: approach-major, then L/S/R
    lane_lengths: dict[LaneId, float]
    lane_speeds: dict[LaneId, float]
    phases: list[PhaseSpec]
    phase_lane_pairs: list[tuple[int, int]] = field(init=False)

    def __post_init__(self):
        index = {lid: i for i, lid in enumerate(self.lane_ids)}
        self.phase_lane_pairs = []
        seen = set()
        controlled = set()
        for phase in self.phases:
            key = tuple(sorted((m.approach, m.turn) for m in phase.movements))
            if key in seen:
                raise ValueError(f"duplicate phase {phase.name} at {self.node}")
            seen.add(key)
            pair = tuple(
                index[LaneId(self.node, m.approach, m.turn)] for m in phase.movements
            )
            self.phase_lane_pairs.append(pair)
            controlled.update(phase.movements)
        missing = {
            Movement(a, t) for a in APPROACHES for t in ("L", "S")
        } - controlled
        if missing:
            raise ValueError(f"movements not covered by any phase at {self.node}: {missing}")
        if not 2 <= len(controlled) <= 12:
            raise ValueError(f"{self.node}: {len(controlled)} controlled movements")

    def lane_index(self, lane: LaneId) -> int:
        return self.lane_ids.index(lane)

    def movement_allowed(self, lane: LaneId, phase_idx: int | None) -> bool:
        if lane.turn == "R":
            return True
        if phase_idx is None:
            return False
        return any(
            m.approach == lane.approach and m.turn == lane.turn
            for m in self.phases[phase_idx].movements
        )


@dataclass(frozen=True)
class Route:
    lanes: tuple[LaneId, ...]


class RoadNetwork:
    """Rectangular grid of four-way signalized intersections."""

    def __init__(self, rows: int, cols: int, ew_length_m: float, ns_length_m: float,
                 speed_mps: float, phase_count: int = 4):
        if rows < 1 or cols < 1:
            raise ValueError("grid must have at least one row and one column")
        if ew_length_m <= 0 or ns_length_m <= 0:
            raise ValueError("lane lengths must be positive")
        if speed_mps <= 0:
            raise ValueError("free-flow speed must be positive")
        self.rows = rows
        self.cols = cols
        self.ew_length_m = float(ew_length_m)
        self.ns_length_m = float(ns_length_m)
        self.speed_mps = float(speed_mps)
        self.phase_count = phase_count
        self.nodes = [(r, c) for r in range(rows) for c in range(cols)]
        self.intersections: dict[tuple[int, int], IntersectionSpec] = {}
        phases = phase_set(phase_count)
        for node in self.nodes:
            lane_ids = tuple(
                LaneId(node, app, turn) for app in APPROACHES for turn in TURNS
            )
            lengths = {
                lid: (ns_length_m if lid.approach in ("N", "S") else ew_length_m)
                for lid in lane_ids
            }
            speeds = {lid: float(speed_mps) for lid in lane_ids}
            self.intersections[node] = IntersectionSpec(
                node=node, lane_ids=lane_ids, lane_lengths=lengths,
                lane_speeds=speeds, phases=list(phases),
            )

    # ------------------------------------------------------------------
    def in_grid(self, node: tuple[int, int]) -> bool:
        return 0 <= node[0] < self.rows and 0 <= node[1] < self.cols

    def exit_heading(self, lane: LaneId) -> str:
        h = _HEADING[lane.approach]
        if lane.turn == "S":
            return h
        return _LEFT_OF[h] if lane.turn == "L" else _RIGHT_OF[h]

    def next_hop(self, lane: LaneId) -> tuple[tuple[int, int], str] | None:
        """Node and approach the movement feeds, or None if it exits the grid."""
        heading = self.exit_heading(lane)
        dr, dc = _STEP[heading]
        nxt = (lane.node[0] + dr, lane.node[1] + dc)
        if not self.in_grid(nxt):
            return None
        return nxt, _ARRIVES_AT[heading]

    def downstream_lanes(self, lane: LaneId) -> tuple[LaneId, ...]:
        hop = self.next_hop(lane)
        if hop is None:
            return ()
        node, approach = hop
        return tuple(LaneId(node, approach, t) for t in TURNS)

    def lane_length(self, lane: LaneId) -> float:
        return self.intersections[lane.node].lane_lengths[lane]

    def lane_speed(self, lane: LaneId) -> float:
        return self.intersections[lane.node].lane_speeds[lane]

    def max_lane_length(self) -> float:
        return max(self.ew_length_m, self.ns_length_m)

    def max_lane_speed(self) -> float:
        return self.speed_mps

    # ------------------------------------------------------------------
    def entry_node(self, side: str, index: int) -> tuple[int, int]:
        if side == "W":
            node = (index, 0)
        elif side == "E":
            node = (index, self.cols - 1)
        elif side == "N":
            node = (0, index)
        elif side == "S":
            node = (self.rows - 1, index)
        else:
            raise ValueError(f"unknown entry side {side!r}")
        if not self.in_grid(node):
            raise ValueError(f"entry {side}{index} is outside the {self.rows}x{self.cols} grid")
        return node

    def route_from_moves(self, side: str, index: int, moves: list[str]) -> Route:
        """Build a route entering from a boundary side and applying one
        movement per intersection until it exits the grid.

        The moves list must exit exactly at its last element; anything else
        is a malformed route.
        """
        if not moves:
            raise ValueError("route needs at least one movement")
        node = self.entry_node(side, index)
        approach = side
        lanes: list[LaneId] = []
        for i, mv in enumerate(moves):
            if mv not in TURNS:
                raise ValueError(f"unknown movement {mv!r} (expected one of {TURNS})")
            lane = LaneId(node, approach, mv)
            lanes.append(lane)
            hop = self.next_hop(lane)
            last = i == len(moves) - 1
            if hop is None and not last:
                raise ValueError(
                    f"route {side}{index}:{''.join(moves)} exits the grid after move {i}")
            if hop is not None and last:
                raise ValueError(
                    f"route {side}{index}:{''.join(moves)} ends inside the grid")
            if hop is not None:
                node, approach = hop
        return Route(tuple(lanes))
