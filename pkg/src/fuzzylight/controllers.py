"""Signal controllers.

Every controller satisfies the same contract: given an intersection
observation it returns a phase index from the intersection's phase set and
a green duration in whole seconds within the configured [low, high] bounds.

``fuzzylight`` composes the sensing channel, the waiting-vehicle phase rule
and the learned duration network; ``fuzzy_cycle`` swaps the phase rule for a
round robin (duration still learned); ``fuzzy_phase_fixed_duration`` keeps
the sensed phase rule but holds every green for a fixed time. The classical
baselines (``fixed_time``, ``max_pressure``) read noise-free ground truth
unless explicitly routed through the channel.
"""

from __future__ import annotations

import numpy as np

from . import sensing
from .duration import (
    CriticNet, DdpgTrainer, DurationNetConfig, FuzzyMembershipNet, OUNoise,
    ReplayTransition, TrainSettings, compute_refer_duration, defuzzify_duration,
    phase_onehot,
)
from .nn import Tensor, load_tensors, save_tensors
from .phasesel import FixedTimePlan, PhaseCycler, fuzzy_phase_select, max_pressure_select
from .sim.engine import IntersectionState, Simulator
from .util import derive_seed

CONTROLLER_NAMES = (
    "fuzzylight", "fixed_time", "max_pressure", "fuzzy_cycle",
    "fuzzy_phase_fixed_duration",
)
LEARNED_CONTROLLERS = ("fuzzylight", "fuzzy_cycle")


class SignalController:
    """Base class; subclasses override ``decide``."""

    name = "base"
    trainable = False

    def begin_episode(self, sim: Simulator, seed: int, training: bool) -> None:
        self.sim = sim
        self.training = training

    def decide(self, node, obs: IntersectionState) -> tuple[int, int]:
        raise NotImplementedError

    def end_episode(self, result) -> None:
        pass


class FixedTimeController(SignalController):
    name = "fixed_time"

    def __init__(self, plan: list[tuple[int, int]] | None = None,
                 phase_count: int = 4, green_s: int = 30):
        if plan is None:
            plan = [(p, green_s) for p in range(phase_count)]
        self._plan_template = plan
        self._plans: dict[tuple[int, int], FixedTimePlan] = {}

    def begin_episode(self, sim, seed, training):
        super().begin_episode(sim, seed, training)
        self._plans = {node: FixedTimePlan(self._plan_template) for node in sim.net.nodes}

    def decide(self, node, obs):
        return self._plans[node].next_decision()


class MaxPressureController(SignalController):
    name = "max_pressure"

    def __init__(self, green_s: int = 15, through_channel: bool = False,
                 channel_kwargs: dict | None = None):
        self.green_s = green_s
        self.through_channel = through_channel
        self.channel_kwargs = channel_kwargs or {}
        self._channels: dict = {}

    def begin_episode(self, sim, seed, training):
        super().begin_episode(sim, seed, training)
        self._channels = {}
        if self.through_channel:
            for i, node in enumerate(sim.net.nodes):
                self._channels[node] = sensing.SensorChannel(
                    seed=derive_seed(seed, i, 0x434E),
                    n_lanes=len(sim.net.intersections[node].lane_ids),
                    slice_m=sim.spacing, er_m=sim.er_m, **self.channel_kwargs)

    def decide(self, node, obs):
        spec = self.sim.net.intersections[node]
        upstream = obs.queue_counts
        if self.through_channel:
            sensed = self._channels[node].sense(obs.distances)
            upstream = sensed.counts.sum(axis=1)
        decision = max_pressure_select(upstream, obs.downstream_queue,
                                       spec.phase_lane_pairs)
        return decision.phase, self.green_s


class FuzzyPhaseController(SignalController):
    """Sensed waiting-vehicle phase rule with a fixed green duration."""

    name = "fuzzy_phase_fixed_duration"

    def __init__(self, green_s: int = 20, noise_kind: str = "gaussian",
                 noise_scale: float = 1.0, z: int = sensing.DEFAULT_Z):
        self.green_s = green_s
        self.noise_kind = noise_kind
        self.noise_scale = noise_scale
        self.z = z
        self._channels: dict = {}

    def begin_episode(self, sim, seed, training):
        super().begin_episode(sim, seed, training)
        self._channels = {
            node: sensing.SensorChannel(
                seed=derive_seed(seed, i, 0x434E),
                n_lanes=len(sim.net.intersections[node].lane_ids),
                slice_m=sim.spacing, er_m=sim.er_m, z=self.z,
                noise_kind=self.noise_kind, noise_scale=self.noise_scale)
            for i, node in enumerate(sim.net.nodes)
        }

    def decide(self, node, obs):
        spec = self.sim.net.intersections[node]
        sensed = self._channels[node].sense(obs.distances)
        decision = fuzzy_phase_select(sensed.counts, spec.phase_lane_pairs)
        return decision.phase, self.green_s


class FuzzyLightController(SignalController):
    """Two-stage controller: sensed phase rule plus learned durations.

    Persistent across episodes so the actor/critic keep training between
    rounds; exploration noise is only sampled in training episodes and its
    magnitude is annealed externally via ``set_exploration``.
    """

    name = "fuzzylight"
    trainable = True

    def __init__(self, net_config: DurationNetConfig,
                 settings: TrainSettings | None = None, *,
                 refer_duration: float = 40.0, low: int = 1, high: int = 40,
                 noise_kind: str = "gaussian", noise_scale: float = 1.0,
                 z: int = sensing.DEFAULT_Z, phase_policy: str = "fuzzy",
                 init_seed: int = 0):
        if phase_policy not in ("fuzzy", "cycle"):
            raise ValueError(f"unknown phase policy {phase_policy!r}")
        if phase_policy == "cycle":
            self.name = "fuzzy_cycle"
        self.cfg = net_config
        self.settings = settings or TrainSettings()
        self.refer_duration = refer_duration
        self.low, self.high = low, high
        self.noise_kind = noise_kind
        self.noise_scale = noise_scale
        self.z = z
        self.phase_policy = phase_policy
        rng = np.random.default_rng(derive_seed(init_seed, 0x4E4554))
        self.actor = FuzzyMembershipNet(net_config, rng)
        self.critic = CriticNet(net_config, rng)
        self.trainer = DdpgTrainer(
            self.actor, self.critic, self.settings,
            rng=np.random.default_rng(derive_seed(init_seed, 0x534D50)))
        self._ou_seed = derive_seed(init_seed, 0x4F55)
        self._episode_index = 0
        self.exploration_scale = 1.0

    # -- lifecycle -------------------------------------------------------
    def set_exploration(self, scale: float) -> None:
        self.exploration_scale = max(0.0, float(scale))

    def begin_episode(self, sim, seed, training):
        super().begin_episode(sim, seed, training)
        self._channels = {}
        self._ou: dict = {}
        self._cyclers: dict = {}
        self._pending: dict = {}
        self._reward_trace: list[float] = []
        self._updates_done_this_episode = 0
        for i, node in enumerate(sim.net.nodes):
            self._channels[node] = sensing.SensorChannel(
                seed=derive_seed(seed, i, 0x434E),
                n_lanes=len(sim.net.intersections[node].lane_ids),
                slice_m=sim.spacing, er_m=sim.er_m, z=self.z,
                noise_kind=self.noise_kind, noise_scale=self.noise_scale)
            if training:
                ou = OUNoise(mean=self.settings.ou_mean,
                             variance=self.settings.ou_variance,
                             theta=self.settings.ou_theta,
                             seed=derive_seed(self._ou_seed, i))
                ou.reset(self._episode_index)
                ou.scale = self.exploration_scale
                self._ou[node] = ou
            self._cyclers[node] = PhaseCycler(len(sim.net.intersections[node].phases))
        self._episode_index += 1

    def decide(self, node, obs):
        spec = self.sim.net.intersections[node]
        sensed = self._channels[node].sense(obs.distances)
        seg = sensing.segment_counts(
            sensed.counts, self.sim.seg_slices, self.sim.segments).astype(np.float64)

        if self.phase_policy == "cycle":
            phase = self._cyclers[node].next_phase()
        else:
            phase = fuzzy_phase_select(sensed.counts, spec.phase_lane_pairs).phase
        onehot = phase_onehot(phase, self.cfg.phase_count)
        degree = self.actor.degree(seg, onehot)

        if self.training:
            reward = -float(obs.queue_counts.sum()) / self.settings.normal_factor
            pend = self._pending.get(node)
            if pend is not None:
                prev_seg, prev_onehot, prev_action = pend
                self.trainer.buffer.add(ReplayTransition(
                    seg=prev_seg, onehot=prev_onehot, action=prev_action,
                    reward=reward, next_seg=seg, next_onehot=onehot))
                self._reward_trace.append(reward)
            self._pending[node] = (seg, onehot, degree)
            self._run_scheduled_updates()
            epsilon = self._ou[node].sample()
        else:
            epsilon = 0.0

        duration = defuzzify_duration(degree, self.refer_duration, epsilon,
                                      self.low, self.high)
        return phase, duration

    def _target_updates(self, now: float) -> int:
        frac = min(max(now / self.sim.episode_seconds, 0.0), 1.0)
        return int(round(self.settings.updates_per_round * frac))

    def _run_scheduled_updates(self) -> None:
        goal = self._target_updates(self.sim.t)
        while self._updates_done_this_episode < goal:
            self._updates_done_this_episode += 1
            self.trainer.update()

    def end_episode(self, result):
        if self.training:
            # flush the remainder of this round's update budget
            while self._updates_done_this_episode < self.settings.updates_per_round:
                self._updates_done_this_episode += 1
                self.trainer.update()
        result.reward_trace = list(self._reward_trace)
        result.reward_sum = float(sum(self._reward_trace))

    # -- persistence -------------------------------------------------------
    def checkpoint_state(self) -> dict[str, np.ndarray]:
        named = {}
        for prefix, net in (("actor.", self.actor), ("critic.", self.critic)):
            for name, arr in net.state_dict().items():
                named[prefix + name] = arr
        return named

    def save(self, path, meta: dict | None = None) -> None:
        meta = dict(meta or {})
        meta.update({
            "controller": self.name,
            "phase_policy": self.phase_policy,
            "refer_duration": self.refer_duration,
            "low": self.low, "high": self.high,
            "lanes": self.cfg.lanes, "segments": self.cfg.segments,
            "phase_count": self.cfg.phase_count,
            "noise_kind": self.noise_kind, "noise_scale": self.noise_scale,
        })
        save_tensors(path, self.checkpoint_state(), meta)

    def load(self, path) -> dict:
        named, meta = load_tensors(path)
        actor_state = {k[len("actor."):]: v for k, v in named.items()
                       if k.startswith("actor.")}
        critic_state = {k[len("critic."):]: v for k, v in named.items()
                        if k.startswith("critic.")}
        self.actor.load_state_dict(actor_state)
        self.critic.load_state_dict(critic_state)
        self.trainer.actor_target.copy_from(self.actor)
        self.trainer.critic_target.copy_from(self.critic)
        return meta


def refer_duration_for(sim_net) -> float:
    return compute_refer_duration(sim_net.max_lane_length(), sim_net.max_lane_speed())
