"""Stage-two duration inference.

A neural membership network maps per-lane segment counts plus the selected
phase to a degree in (0, 1); the degree is defuzzified to whole seconds of
green via the reference duration, with mean-reverting exploration noise
added during training. The actor/critic pair trains with deterministic
policy gradient updates over a bounded replay buffer.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .nn import Layer, Linear, Mlp, MultiHeadAttention, Tensor, concat, make_optimizer


@dataclass
class DurationNetConfig:
    lanes: int = 12
    segments: int = 4
    embed_dim: int = 4                 # per-segment embedding width
    attention_heads: int = 1
    head_hidden: int = 256
    phase_lane_pairs: tuple[tuple[int, int], ...] = (
        (0 * 3 + 1, 2 * 3 + 1),   # N straight + S straight
        (0 * 3 + 0, 2 * 3 + 0),   # N left + S left
        (1 * 3 + 1, 3 * 3 + 1),   # E straight + W straight
        (1 * 3 + 0, 3 * 3 + 0),   # E left + W left
    )

    @property
    def lane_dim(self) -> int:
        return self.segments * self.embed_dim

    @property
    def phase_count(self) -> int:
        return len(self.phase_lane_pairs)


class LaneFeatureTrunk(Layer):
    """Shared feature extractor: per-segment sigmoid embedding, self-attention
    over each phase's lane pair, one-hot phase fusion, then two relu layers."""

    def __init__(self, cfg: DurationNetConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.embed = self._register("embed", Linear(1, cfg.embed_dim, rng))
        self.attention = self._register(
            "attention", MultiHeadAttention(cfg.lane_dim, cfg.attention_heads, rng))
        self.fc1 = self._register("fc1", Linear(cfg.lane_dim, cfg.lane_dim, rng))
        self.fc2 = self._register("fc2", Linear(cfg.lane_dim, cfg.lane_dim, rng))

    def __call__(self, segments: Tensor, phase_onehot: Tensor) -> Tensor:
        cfg = self.cfg
        batch = segments.shape[0]
        flat = segments.reshape(batch, cfg.lanes * cfg.segments, 1)
        embedded = self.embed(flat).sigmoid()
        lanes = embedded.reshape(batch, cfg.lanes, cfg.lane_dim)
        feats = []
        for pair in cfg.phase_lane_pairs:
            tokens = lanes.take(pair, axis=1)            # (B, 2, lane_dim)
            attended = self.attention(tokens)
            feats.append(attended.mean(axis=1).reshape(batch, 1, cfg.lane_dim))
        stacked = concat(feats, axis=1)                   # (B, P, lane_dim)
        mask = phase_onehot.reshape(batch, cfg.phase_count, 1)
        fused = (stacked * mask).sum(axis=1)              # (B, lane_dim)
        x = self.fc1(fused).relu()
        return self.fc2(x).relu()


class FuzzyMembershipNet(Layer):
    """Actor: trunk followed by a wide head and a sigmoid squashing the
    output degree into (0, 1). The head's last layer starts at zero so a
    fresh policy emits exactly 0.5."""

    def __init__(self, cfg: DurationNetConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.trunk = self._register("trunk", LaneFeatureTrunk(cfg, rng))
        self.head = self._register(
            "head",
            Mlp([cfg.lane_dim, cfg.head_hidden, cfg.head_hidden, 1], rng,
                zero_init_last=True),
        )

    def __call__(self, segments: Tensor, phase_onehot: Tensor) -> Tensor:
        _check_onehot(phase_onehot.data, self.cfg.phase_count)
        h = self.trunk(segments, phase_onehot)
        return self.head(h).sigmoid()

    def degree(self, segments: np.ndarray, phase_onehot: np.ndarray) -> float:
        out = self(Tensor(segments[None, ...]), Tensor(phase_onehot[None, ...]))
        return float(out.data[0, 0])


class CriticNet(Layer):
    """Q(s, a): the same trunk architecture (separate parameters), a state
    encoder, a scalar action encoder, and a joint head with linear output."""

    def __init__(self, cfg: DurationNetConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.trunk = self._register("trunk", LaneFeatureTrunk(cfg, rng))
        d = cfg.lane_dim
        self.state1 = self._register("state1", Linear(d, d, rng))
        self.state2 = self._register("state2", Linear(d, 2 * d, rng))
        self.action1 = self._register("action1", Linear(1, 2 * d, rng))
        self.joint = self._register(
            "joint",
            Mlp([4 * d, cfg.head_hidden, cfg.head_hidden, 1], rng,
                zero_init_last=True),
        )

    def __call__(self, segments: Tensor, phase_onehot: Tensor, action: Tensor) -> Tensor:
        h = self.trunk(segments, phase_onehot)
        s = self.state2(self.state1(h).relu()).relu()
        a = self.action1(action).relu()
        return self.joint(concat([s, a], axis=1))


def _check_onehot(onehot: np.ndarray, phase_count: int) -> None:
    if onehot.shape[-1] != phase_count:
        raise ValueError(
            f"phase one-hot has width {onehot.shape[-1]}, expected {phase_count}")
    flat = onehot.reshape(-1, phase_count)
    ok = np.all(np.isin(flat, (0.0, 1.0))) and np.all(flat.sum(axis=1) == 1.0)
    if not ok:
        raise ValueError("phase selector must be one-hot (exactly one 1 per row)")


def phase_onehot(phase: int, phase_count: int) -> np.ndarray:
    out = np.zeros(phase_count)
    out[phase] = 1.0
    return out


# ----------------------------------------------------------------------
# defuzzification to seconds
# ----------------------------------------------------------------------

def compute_refer_duration(max_lane_length_m: float, max_lane_speed_mps: float) -> float:
    """Reference green: time to traverse the longest lane at its speed."""
    if max_lane_length_m <= 0 or max_lane_speed_mps <= 0:
        raise ValueError("lane length and speed must be positive")
    return max_lane_length_m / max_lane_speed_mps


def defuzzify_duration(degree: float, refer_duration: float, epsilon: float,
                       low: int, high: int) -> int:
    """Whole seconds of green: clip(degree * refer + epsilon, low, high),
    rounded half away from zero. The clip is a hard safety bound."""
    if low >= high:
        raise ValueError("low must be < high")
    if refer_duration <= 0:
        raise ValueError("refer duration must be positive")
    t = min(max(degree * refer_duration + epsilon, float(low)), float(high))
    return int(math.floor(t + 0.5))


# ----------------------------------------------------------------------
# exploration and replay
# ----------------------------------------------------------------------

class OUNoise:
    """Mean-reverting exploration noise, deterministic under its seed.

    ``variance`` is the stationary variance of the process; ``scale``
    multiplies emitted samples and is annealed toward zero across training
    rounds.
    """

    def __init__(self, mean: float = 1.0, variance: float = 2.0,
                 theta: float = 0.15, seed: int = 0):
        self.mean = mean
        self.theta = theta
        self.sigma = math.sqrt(2.0 * theta * variance)
        self.seed = seed
        self.scale = 1.0
        self.reset(0)

    def reset(self, episode: int) -> None:
        self._rng = np.random.default_rng(
            np.random.SeedSequence([self.seed & 0xFFFFFFFF, episode, 0x4F55]))
        self.state = self.mean

    def sample(self) -> float:
        self.state += self.theta * (self.mean - self.state) + \
            self.sigma * float(self._rng.standard_normal())
        return self.scale * self.state


@dataclass
class ReplayTransition:
    seg: np.ndarray
    onehot: np.ndarray
    action: float
    reward: float
    next_seg: np.ndarray
    next_onehot: np.ndarray


class ReplayBuffer:
    """FIFO-bounded transition store."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: deque[ReplayTransition] = deque(maxlen=capacity)

    def add(self, item: ReplayTransition) -> None:
        self._items.append(item)

    def __len__(self) -> int:
        return len(self._items)

    def oldest(self) -> ReplayTransition:
        return self._items[0]

    def sample(self, n: int, rng: np.random.Generator) -> list[ReplayTransition]:
        if n > len(self._items):
            raise ValueError("not enough transitions to sample")
        idx = rng.choice(len(self._items), size=n, replace=False)
        return [self._items[int(i)] for i in idx]


# ----------------------------------------------------------------------
# training
# ----------------------------------------------------------------------

def soft_update(online: Layer | dict, target: Layer | dict, tau: float) -> None:
    """target <- tau * online + (1 - tau) * target, elementwise per tensor."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must be in [0, 1]")
    o = online.named_parameters() if isinstance(online, Layer) else online
    t = target.named_parameters() if isinstance(target, Layer) else target
    if set(o) != set(t):
        raise ValueError("online/target parameter names differ")
    for name, op in o.items():
        tp = t[name]
        od = op.data if isinstance(op, Tensor) else op
        td = tp.data if isinstance(tp, Tensor) else tp
        if od.shape != td.shape:
            raise ValueError(f"shape mismatch for {name}")
        blended = tau * od + (1.0 - tau) * td
        if isinstance(tp, Tensor):
            tp.data = blended
        else:
            t[name][...] = blended


@dataclass
class TrainSettings:
    actor_lr: float = 1e-5
    critic_lr: float = 2e-3
    gamma: float = 0.8
    tau: float = 0.95
    batch_size: int = 20
    target_interval: int = 5
    buffer_capacity: int = 12000
    updates_per_round: int = 200
    optimizer: str = "adam"
    normal_factor: float = 20.0
    ou_mean: float = 1.0
    ou_variance: float = 2.0
    ou_theta: float = 0.15


def _batch_tensors(batch: list[ReplayTransition]):
    seg = Tensor(np.stack([b.seg for b in batch]).astype(np.float64))
    onehot = Tensor(np.stack([b.onehot for b in batch]))
    action = Tensor(np.array([[b.action] for b in batch]))
    reward = np.array([[b.reward] for b in batch])
    nseg = Tensor(np.stack([b.next_seg for b in batch]).astype(np.float64))
    nonehot = Tensor(np.stack([b.next_onehot for b in batch]))
    return seg, onehot, action, reward, nseg, nonehot


class DdpgTrainer:
    """Critic regression to the bootstrapped target plus deterministic policy
    gradient steps on the actor, with periodically blended target networks."""

    def __init__(self, actor: FuzzyMembershipNet, critic: CriticNet,
                 settings: TrainSettings, rng: np.random.Generator):
        self.actor = actor
        self.critic = critic
        self.settings = settings
        self.rng = rng
        cfg = actor.cfg
        init_rng = np.random.default_rng(0)
        self.actor_target = FuzzyMembershipNet(cfg, init_rng)
        self.actor_target.copy_from(actor)
        self.critic_target = CriticNet(cfg, init_rng)
        self.critic_target.copy_from(critic)
        self.actor_opt = make_optimizer(settings.optimizer, actor.parameters(),
                                        settings.actor_lr)
        self.critic_opt = make_optimizer(settings.optimizer, critic.parameters(),
                                         settings.critic_lr)
        self.buffer = ReplayBuffer(settings.buffer_capacity)
        self.update_steps = 0

    def update(self) -> tuple[float, float] | None:
        """One gradient pass on a sampled batch; silently skips while the
        buffer holds fewer than one batch of transitions."""
        s = self.settings
        if len(self.buffer) < s.batch_size:
            return None
        batch = self.buffer.sample(s.batch_size, self.rng)
        seg, onehot, action, reward, nseg, nonehot = _batch_tensors(batch)

        # critic target: r + gamma * Q'(s', mu'(s'))
        next_action = self.actor_target(nseg, nonehot)
        next_q = self.critic_target(nseg, nonehot, Tensor(next_action.data))
        target = reward + s.gamma * next_q.data

        q = self.critic(seg, onehot, action)
        err = q - Tensor(target)
        critic_loss = (err * err).mean()
        critic_loss.backward()
        self.critic_opt.step()
        self.critic_opt.zero_grad()

        # actor objective: maximize Q(s, mu(s)) through the critic
        pred_action = self.actor(seg, onehot)
        q_of_pred = self.critic(seg, onehot, pred_action)
        actor_loss = -q_of_pred.mean()
        actor_loss.backward()
        self.actor_opt.step()
        self.actor_opt.zero_grad()
        self.critic_opt.zero_grad()   # clear grads the actor pass left on the critic

        self.update_steps += 1
        if self.update_steps % s.target_interval == 0:
            soft_update(self.critic, self.critic_target, s.tau)
            soft_update(self.actor, self.actor_target, s.tau)
        return float(critic_loss.data), float(actor_loss.data)
