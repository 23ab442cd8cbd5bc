"""Deterministic point-queue microsimulator over a grid network.

Vehicles travel at free-flow speed, stack behind queues with one slice of
spacing, and discharge through green at a fixed saturation headway. Signals
run green/yellow/all-red sequences driven by a controller that is consulted
once per green expiry. Identical (scenario, seed, controller) inputs replay
bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .network import LaneId, RoadNetwork, Route

STOP_SPEED = 0.1        # m/s; below this a vehicle counts as stopped/queued
GREEN, YELLOW, ALL_RED, IDLE = "green", "yellow", "all_red", "idle"


@dataclass
class Vehicle:
    vid: int
    route: Route
    hop: int
    dist: float                  # meters to the current stop line
    speed: float
    spawn_t: float
    done_t: float | None = None
    stops: int = 0
    first_move_t: float | None = None

    @property
    def lane(self) -> LaneId:
        return self.route.lanes[self.hop]


@dataclass
class FlowSpec:
    """One origin-destination stream: a route plus an arrival pattern.

    Either a Poisson ``rate_veh_per_s`` (seeded, pre-generated per episode) or
    an explicit ``schedule`` of arrival times.
    """

    side: str
    index: int
    moves: list[str]
    rate_veh_per_s: float | None = None
    schedule: list[float] | None = None

    def __post_init__(self):
        if (self.rate_veh_per_s is None) == (self.schedule is None):
            raise ValueError("flow needs exactly one of rate_veh_per_s or schedule")
        if self.rate_veh_per_s is not None and self.rate_veh_per_s < 0:
            raise ValueError(f"negative arrival rate {self.rate_veh_per_s}")
        if self.schedule is not None and any(t < 0 for t in self.schedule):
            raise ValueError("schedule times must be >= 0")


class SignalRuntime:
    """Per-intersection signal head state machine."""

    def __init__(self, low: int, high: int, yellow_s: int, all_red_s: int):
        self.low = low
        self.high = high
        self.yellow_s = yellow_s
        self.all_red_s = all_red_s
        self.mode = IDLE
        self.phase: int | None = None
        self.remaining = 0.0
        self.pending: tuple[int, float] | None = None
        self.elapsed_in_phase = 0.0

    def needs_decision(self) -> bool:
        return self.mode == IDLE or (self.mode == GREEN and self.remaining <= 0)

    def apply(self, new_phase: int, duration: float, phase_count: int) -> None:
        """Schedule a phase: same phase extends green with no transition,
        a different phase inserts yellow then all-red first."""
        if not 0 <= new_phase < phase_count:
            raise ValueError(f"phase {new_phase} out of range 0..{phase_count - 1}")
        if not self.low <= duration <= self.high:
            raise ValueError(
                f"duration {duration} outside [{self.low}, {self.high}]")
        if self.mode == IDLE or new_phase == self.phase:
            if new_phase != self.phase:
                self.elapsed_in_phase = 0.0
            self.mode = GREEN
            self.phase = new_phase
            self.remaining = float(duration)
        else:
            self.mode = YELLOW
            self.remaining = float(self.yellow_s)
            self.pending = (new_phase, float(duration))

    def tick(self, dt: float) -> None:
        self.remaining -= dt
        self.elapsed_in_phase += dt
        if self.remaining > 0:
            return
        if self.mode == YELLOW:
            self.mode = ALL_RED
            self.remaining = float(self.all_red_s)
        elif self.mode == ALL_RED:
            phase, duration = self.pending  # type: ignore[misc]
            self.pending = None
            self.mode = GREEN
            self.phase = phase
            self.remaining = duration
            self.elapsed_in_phase = 0.0
        # green with remaining <= 0 waits for the next controller decision


@dataclass
class IntersectionState:
    """Ground-truth observation of one intersection at one instant."""

    node: tuple[int, int]
    time: float
    lane_ids: tuple[LaneId, ...]
    vehicle_counts: np.ndarray          # x(l): all vehicles on each lane
    queue_counts: np.ndarray            # q(l): vehicles slower than STOP_SPEED
    seg_counts: np.ndarray              # per-lane per-segment counts inside ER
    distances: list[np.ndarray]         # raw stop-line distances per lane
    downstream_queue: np.ndarray        # queue on the link each movement feeds
    phase: int | None
    elapsed_in_phase: float


@dataclass
class EpisodeResult:
    episode_seconds: float
    spawned: int
    completed: list[tuple[float, float]]        # (spawn_t, done_t)
    in_network: list[float]                     # spawn_t of unfinished vehicles
    total_stops: int
    decision_count: int
    reward_sum: float = 0.0
    reward_trace: list[float] = field(default_factory=list)
    events: list[dict] | None = None


class _LaneRuntime:
    __slots__ = ("lane_id", "length", "speed", "vehicles", "credit")

    def __init__(self, lane_id: LaneId, length: float, speed: float):
        self.lane_id = lane_id
        self.length = length
        self.speed = speed
        self.vehicles: list[Vehicle] = []   # sorted by dist ascending (head first)
        self.credit = 0.0


class Simulator:
    """Owns the world state for one episode at a time."""

    def __init__(self, net: RoadNetwork, flows: list[FlowSpec],
                 episode_seconds: float, *, queue_spacing_m: float = 8.0,
                 saturation_headway_s: float = 2.0, seg_slices: int = 4,
                 segments: int = 4, er_m: float = 160.0, low: int = 1,
                 high: int = 40, yellow_s: int = 3, all_red_s: int = 2,
                 dt: float = 1.0, collect_events: bool = False):
        if dt <= 0:
            raise ValueError("dt must be positive")
        self.net = net
        self.flows = flows
        self.episode_seconds = float(episode_seconds)
        self.spacing = float(queue_spacing_m)
        self.headway = float(saturation_headway_s)
        self.seg_slices = seg_slices
        self.segments = segments
        self.er_m = float(er_m)
        self.low, self.high = low, high
        self.yellow_s, self.all_red_s = yellow_s, all_red_s
        self.dt = float(dt)
        self.collect_events = collect_events
        self.routes = [
            net.route_from_moves(f.side, f.index, f.moves) for f in flows
        ]
        self.reset(seed=0)

    # ------------------------------------------------------------------
    def reset(self, seed: int) -> None:
        self.t = 0.0
        self.seed = seed
        self._next_vid = 0
        self.total_stops = 0
        self.completed: list[tuple[float, float]] = []
        self.spawned = 0
        self.decision_count = 0
        self.events: list[dict] = [] if self.collect_events else None  # type: ignore[assignment]
        self.lanes: dict[LaneId, _LaneRuntime] = {}
        for node in self.net.nodes:
            spec = self.net.intersections[node]
            for lid in spec.lane_ids:
                self.lanes[lid] = _LaneRuntime(
                    lid, spec.lane_lengths[lid], spec.lane_speeds[lid])
        self.signals = {
            node: SignalRuntime(self.low, self.high, self.yellow_s, self.all_red_s)
            for node in self.net.nodes
        }
        self._arrivals = self._generate_arrivals(seed)
        self._arrival_pos = [0] * len(self._arrivals)

    def _generate_arrivals(self, seed: int) -> list[list[float]]:
        """Pre-generate every flow's arrival times for the episode; arrivals
        are independent of controller behavior so different controllers see
        identical demand under the same seed."""
        out: list[list[float]] = []
        for i, flow in enumerate(self.flows):
            if flow.schedule is not None:
                times = sorted(t for t in flow.schedule if t < self.episode_seconds)
            elif flow.rate_veh_per_s == 0:
                times = []
            else:
                rng = np.random.default_rng(
                    np.random.SeedSequence([seed & 0xFFFFFFFF, i, 0x41525256]))
                times = []
                t = rng.exponential(1.0 / flow.rate_veh_per_s)
                while t < self.episode_seconds:
                    times.append(float(t))
                    t += rng.exponential(1.0 / flow.rate_veh_per_s)
            out.append(times)
        return out

    # ------------------------------------------------------------------
    def inject_vehicle(self, lane_id: LaneId, dist: float, speed: float = 0.0,
                       route: Route | None = None) -> Vehicle:
        """Place a vehicle directly (test and tooling hook)."""
        lane = self.lanes[lane_id]
        if not 0 <= dist <= lane.length:
            raise ValueError(f"distance {dist} outside [0, {lane.length}]")
        if route is None:
            route = Route((lane_id,))
        veh = Vehicle(vid=self._next_vid, route=route,
                      hop=route.lanes.index(lane_id), dist=float(dist),
                      speed=float(speed), spawn_t=self.t,
                      first_move_t=self.t if speed >= STOP_SPEED else None)
        self._next_vid += 1
        self.spawned += 1
        lane.vehicles.append(veh)
        lane.vehicles.sort(key=lambda v: v.dist)
        return veh

    def force_signal(self, node: tuple[int, int], phase: int, duration: float) -> None:
        self.signals[node].apply(phase, duration, len(self.net.intersections[node].phases))

    # ------------------------------------------------------------------
    def observe(self, node: tuple[int, int]) -> IntersectionState:
        spec = self.net.intersections[node]
        n = len(spec.lane_ids)
        counts = np.zeros(n, dtype=np.int64)
        queues = np.zeros(n, dtype=np.int64)
        segs = np.zeros((n, self.segments), dtype=np.int64)
        dists: list[np.ndarray] = []
        seg_width = self.seg_slices * self.spacing
        for i, lid in enumerate(spec.lane_ids):
            lane = self.lanes[lid]
            counts[i] = len(lane.vehicles)
            arr = np.array([v.dist for v in lane.vehicles], dtype=np.float64)
            dists.append(arr)
            for v in lane.vehicles:
                if v.speed < STOP_SPEED:
                    queues[i] += 1
                if v.dist < self.er_m:
                    s = int(v.dist // seg_width)
                    segs[i, min(s, self.segments - 1)] += 1
        downstream = np.zeros(n, dtype=np.int64)
        for i, lid in enumerate(spec.lane_ids):
            total = 0
            for dlid in self.net.downstream_lanes(lid):
                total += sum(
                    1 for v in self.lanes[dlid].vehicles if v.speed < STOP_SPEED)
            downstream[i] = total
        sig = self.signals[node]
        return IntersectionState(
            node=node, time=self.t, lane_ids=spec.lane_ids,
            vehicle_counts=counts, queue_counts=queues, seg_counts=segs,
            distances=dists, downstream_queue=downstream,
            phase=sig.phase, elapsed_in_phase=sig.elapsed_in_phase,
        )

    # ------------------------------------------------------------------
    def _spawn_due(self) -> None:
        horizon = self.t + self.dt
        for i, times in enumerate(self._arrivals):
            pos = self._arrival_pos[i]
            while pos < len(times) and times[pos] < horizon:
                route = self.routes[i]
                lane = self.lanes[route.lanes[0]]
                veh = Vehicle(
                    vid=self._next_vid, route=route, hop=0, dist=lane.length,
                    speed=lane.speed, spawn_t=self.t, first_move_t=self.t)
                self._next_vid += 1
                self.spawned += 1
                lane.vehicles.append(veh)  # enters at the rear by construction
                if self.events is not None:
                    self.events.append(
                        {"t": self.t, "event": "spawn", "vid": veh.vid,
                         "lane": str(lane.lane_id)})
                pos += 1
            self._arrival_pos[i] = pos

    def _advance_lane(self, lane: _LaneRuntime, allowed: bool) -> Vehicle | None:
        """Move every vehicle on one lane one tick; return the crosser, if any."""
        if allowed:
            lane.credit = min(lane.credit + self.dt / self.headway, 1.0)
        else:
            lane.credit = 0.0
        crossed: Vehicle | None = None
        barrier: float | None = None
        keep: list[Vehicle] = []
        for veh in lane.vehicles:
            free_d = veh.dist - lane.speed * self.dt
            if barrier is None:
                if allowed and lane.credit >= 1.0 and free_d <= 0.0 and crossed is None:
                    lane.credit -= 1.0
                    self._note_speed(veh, lane.speed)
                    crossed = veh
                    continue
                new_d = max(free_d, 0.0)
            else:
                new_d = max(free_d, barrier + self.spacing)
            new_d = min(new_d, veh.dist)  # never move backward
            self._note_speed(veh, (veh.dist - new_d) / self.dt)
            veh.dist = new_d
            barrier = new_d
            keep.append(veh)
        lane.vehicles = keep
        return crossed

    def _note_speed(self, veh: Vehicle, speed: float) -> None:
        was_moving = veh.speed >= STOP_SPEED
        veh.speed = speed
        if speed >= STOP_SPEED and veh.first_move_t is None:
            veh.first_move_t = self.t
        if was_moving and speed < STOP_SPEED:
            veh.stops += 1
            self.total_stops += 1
            if self.events is not None:
                self.events.append({"t": self.t, "event": "stop", "vid": veh.vid,
                                    "lane": str(veh.lane), "dist": veh.dist})

    def _place_crosser(self, veh: Vehicle) -> None:
        done_t = self.t + self.dt
        if veh.hop == len(veh.route.lanes) - 1:
            veh.done_t = done_t
            self.completed.append((veh.spawn_t, done_t))
            if self.events is not None:
                self.events.append({"t": done_t, "event": "complete", "vid": veh.vid})
            return
        veh.hop += 1
        lane = self.lanes[veh.route.lanes[veh.hop]]
        veh.dist = lane.length
        veh.speed = lane.speed
        lane.vehicles.append(veh)
        if self.events is not None:
            self.events.append({"t": done_t, "event": "enter", "vid": veh.vid,
                                "lane": str(lane.lane_id)})

    def step(self) -> None:
        """Advance the world by one tick (signals assumed already decided)."""
        self._spawn_due()
        crossers: list[Vehicle] = []
        for node in self.net.nodes:
            spec = self.net.intersections[node]
            sig = self.signals[node]
            green = sig.mode == GREEN and sig.remaining > 0
            for lid in spec.lane_ids:
                allowed = lid.turn == "R" or (
                    green and spec.movement_allowed(lid, sig.phase))
                veh = self._advance_lane(self.lanes[lid], allowed)
                if veh is not None:
                    crossers.append(veh)
        for veh in crossers:
            self._place_crosser(veh)
        for sig in self.signals.values():
            sig.tick(self.dt)
        self.t += self.dt

    # ------------------------------------------------------------------
    def run(self, controller, seed: int, training: bool = False,
            tick_hook: Callable[["Simulator"], None] | None = None) -> EpisodeResult:
        """Run a full episode under ``controller``.

        The controller is consulted whenever an intersection's green expires
        (and once at t=0); it returns a (phase index, integer seconds)
        decision that is scheduled with the standard yellow/all-red
        transition when the phase changes.
        """
        self.reset(seed)
        controller.begin_episode(self, seed, training)
        while self.t < self.episode_seconds:
            for node in self.net.nodes:
                sig = self.signals[node]
                if sig.needs_decision():
                    obs = self.observe(node)
                    phase, duration = controller.decide(node, obs)
                    sig.apply(int(phase), float(duration),
                              len(self.net.intersections[node].phases))
                    self.decision_count += 1
                    if self.events is not None:
                        self.events.append(
                            {"t": self.t, "event": "decision", "node": list(node),
                             "phase": int(phase), "duration": float(duration)})
            self.step()
            if tick_hook is not None:
                tick_hook(self)
        in_network = [
            v.spawn_t
            for lane in self.lanes.values() for v in lane.vehicles
        ]
        result = EpisodeResult(
            episode_seconds=self.episode_seconds, spawned=self.spawned,
            completed=list(self.completed), in_network=in_network,
            total_stops=self.total_stops, decision_count=self.decision_count,
            events=self.events,
        )
        controller.end_episode(result)
        return result

    # -- invariant helpers (used by tests) ------------------------------
    def vehicles_in_network(self) -> int:
        return sum(len(lane.vehicles) for lane in self.lanes.values())

    def conservation_ok(self) -> bool:
        return self.spawned == self.vehicles_in_network() + len(self.completed)
