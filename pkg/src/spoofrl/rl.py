"""Deep Q-learning agent that tunes a scalar detection threshold on
differential distance (DD).

Each environment step presents one DD sample with its ground-truth label.
The agent raises, lowers or keeps the threshold, the sample is then scored
with the updated threshold (flag iff DD > threshold) and the agent earns +1
when the flag matches the label and -100 otherwise.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import asdict, dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from .mlp import AdamState, MlpNetwork, adam_step, atomic_write_text, dumps_json, forward, init_network, \
    loss_and_gradients, model_from_dict, model_to_dict

QNET_LAYERS = (1, 24, 24, 3)
# "margin": the Q-network sees DD minus the current threshold; "dd": raw DD only
OBSERVATIONS = ("margin", "dd")


class Action(IntEnum):
    INCREASE = 0
    DECREASE = 1
    KEEP = 2


@dataclass(frozen=True)
class RewardScheme:
    correct: float = 1.0
    incorrect: float = -100.0

    def __post_init__(self):
        if not self.correct > 0 > self.incorrect:
            raise ValueError("need correct > 0 > incorrect")


@dataclass(frozen=True)
class ThresholdState:
    threshold_m: float


@dataclass
class QLearningConfig:
    alpha: float = 1.0
    gamma: float = 0.9
    total_steps: int = 10_000
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_fraction: float = 0.2
    replay_capacity: int = 10_000
    batch_size: int = 32
    target_sync_steps: int = 500
    learning_rate: float = 1e-3
    threshold_step_m: float = 0.01
    threshold_max_m: float = 200.0
    threshold_init_m: float = 0.1
    reward_correct: float = 1.0
    reward_incorrect: float = -100.0
    observation: str = "margin"
    rng_seed: int = 0

    def __post_init__(self):
        if self.observation not in OBSERVATIONS:
            raise ValueError(f"observation must be one of {OBSERVATIONS}, got {self.observation!r}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if not self.threshold_step_m > 0:
            raise ValueError("threshold_step_m must be > 0")
        if not 0 <= self.threshold_init_m <= self.threshold_max_m:
            raise ValueError("threshold_init_m must lie in [0, threshold_max_m]")
        if self.total_steps <= 0 or self.batch_size <= 0 or self.replay_capacity < self.batch_size:
            raise ValueError("total_steps, batch_size must be positive and replay_capacity ≥ batch_size")
        RewardScheme(self.reward_correct, self.reward_incorrect)

    @property
    def rewards(self) -> RewardScheme:
        return RewardScheme(self.reward_correct, self.reward_incorrect)

    def epsilon(self, step: int) -> float:
        """Linear decay over the first ``epsilon_decay_fraction`` of training, then flat."""
        horizon = self.epsilon_decay_fraction * self.total_steps
        if horizon <= 0 or step >= horizon:
            return self.epsilon_end
        return self.epsilon_start + (self.epsilon_end - self.epsilon_start) * step / horizon

    def to_dict(self) -> dict:
        return asdict(self)


def apply_action(threshold_m: float, action: Action, cfg: QLearningConfig) -> float:
    if action == Action.INCREASE:
        threshold_m += cfg.threshold_step_m
    elif action == Action.DECREASE:
        threshold_m -= cfg.threshold_step_m
    return min(max(threshold_m, 0.0), cfg.threshold_max_m)


def env_step(state: ThresholdState, action: Action, dd_m: float, label: int,
             cfg: QLearningConfig) -> tuple[ThresholdState, bool, float]:
    """Pure transition for one sample: ``(next_state, detected, reward)``."""
    thr = apply_action(state.threshold_m, Action(action), cfg)
    detected = dd_m > thr
    reward = cfg.reward_correct if detected == bool(label) else cfg.reward_incorrect
    return ThresholdState(thr), detected, reward


class ThresholdEnv:
    """Gym-style environment replaying a labelled DD series, one sample per step.

    ``reset`` rewinds to the first sample and, unless ``keep_threshold``,
    restores the initial threshold; an episode ends after the last sample.
    """

    def __init__(self, dd_m, labels, cfg: QLearningConfig):
        dd_m = np.asarray(dd_m, dtype=float)
        labels = np.asarray(labels, dtype=np.int8)
        if dd_m.shape != labels.shape or dd_m.ndim != 1 or dd_m.size == 0:
            raise ValueError("dd and labels must be equal-length non-empty 1-d series")
        if np.any(dd_m < 0) or not np.all(np.isfinite(dd_m)):
            raise ValueError("dd must be finite and ≥ 0")
        if labels.all() or not labels.any():
            raise ValueError("training series needs at least one attack and one clean sample")
        self.dd = dd_m
        self.labels = labels
        self.cfg = cfg
        self.reset()

    def observe(self, i: int) -> float:
        if self.cfg.observation == "margin":
            return self.dd[i] - self.state.threshold_m
        return self.dd[i]

    def reset(self, keep_threshold: bool = False) -> float:
        self.index = 0
        if not keep_threshold:
            self.state = ThresholdState(self.cfg.threshold_init_m)
        return self.observe(0)

    def step(self, action: Action) -> tuple[float, float, bool, dict]:
        i = self.index
        self.state, detected, reward = env_step(self.state, action, self.dd[i], self.labels[i], self.cfg)
        self.index = i + 1
        done = self.index >= len(self.dd)
        next_obs = self.observe(self.index if not done else i)
        return next_obs, reward, done, {"detected": detected, "threshold_m": self.state.threshold_m}


def q_update(q_current: float, q_next_max: float, reward: float, alpha: float, gamma: float) -> float:
    """Q <- Q + alpha * (r + gamma * max_a Q(s', a) - Q)."""
    return q_current + alpha * (reward + gamma * q_next_max - q_current)


def select_action(qnet: MlpNetwork, obs: float, epsilon: float, rng: np.random.Generator) -> Action:
    """Epsilon-greedy; greedy ties go to the lowest action index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return Action(int(rng.integers(len(Action))))
    q = forward(qnet, np.array([obs], dtype=float))
    return Action(int(np.argmax(q)))


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self._items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, obs: float, action: int, reward: float, next_obs: float, done: bool) -> None:
        self._items.append((obs, int(action), reward, next_obs, done))

    def sample(self, rng: np.random.Generator, batch_size: int):
        idx = rng.integers(len(self._items), size=batch_size)
        batch = [self._items[i] for i in idx]
        obs, act, rew, nxt, done = zip(*batch)
        return (np.array(obs)[:, None], np.array(act), np.array(rew, dtype=float),
                np.array(nxt)[:, None], np.array(done, dtype=bool))


@dataclass
class AgentResult:
    qnet: MlpNetwork
    threshold: ThresholdState
    reward_history: list[float]
    config: QLearningConfig
    episode_lengths: list[int] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "threshold_m": self.threshold.threshold_m,
            "qnet": model_to_dict(self.qnet, role="qnet"),
            "config": self.config.to_dict(),
            "reward_history": self.reward_history,
            "episode_lengths": self.episode_lengths,
        }


def train_agent(dd_m, labels, cfg: QLearningConfig) -> AgentResult:
    """DQN with experience replay and a periodically synced target network.

    Regression targets follow the tabular update with the target network
    supplying ``max_a Q(s', a)``; the loss is MAE on the taken action only.
    The threshold carries over from one episode to the next, so the result
    is the threshold the agent holds when training stops.
    ``reward_history`` holds one total per episode (a trailing partial
    episode included).
    """
    env = ThresholdEnv(dd_m, labels, cfg)
    rng = np.random.default_rng(cfg.rng_seed)
    qnet = init_network(QNET_LAYERS, cfg.rng_seed)
    target = qnet.copy()
    adam = AdamState.for_network(qnet, lr=cfg.learning_rate)
    buffer = ReplayBuffer(cfg.replay_capacity)
    rows = np.arange(cfg.batch_size)

    history: list[float] = []
    lengths: list[int] = []
    obs = env.reset()
    ep_reward, ep_len = 0.0, 0
    for step in range(cfg.total_steps):
        action = select_action(qnet, obs, cfg.epsilon(step), rng)
        next_obs, reward, done, _ = env.step(action)
        buffer.add(obs, action, reward, next_obs, done)
        ep_reward += reward
        ep_len += 1

        if len(buffer) >= cfg.batch_size:
            s, a, r, s2, d = buffer.sample(rng, cfg.batch_size)
            q = forward(qnet, s)
            q_next = forward(target, s2).max(axis=1) * ~d
            y = q.copy()
            y[rows, a] = q_update(q[rows, a], q_next, r, cfg.alpha, cfg.gamma)
            mask = np.zeros_like(q)
            mask[rows, a] = 1.0
            _, grad = loss_and_gradients(qnet, s, y, mask)
            adam_step(qnet, grad, adam)
        if (step + 1) % cfg.target_sync_steps == 0:
            target.load_params(qnet)

        if done:
            history.append(ep_reward)
            lengths.append(ep_len)
            obs = env.reset(keep_threshold=True)
            ep_reward, ep_len = 0.0, 0
        else:
            obs = next_obs
    if ep_len:
        history.append(ep_reward)
        lengths.append(ep_len)
    return AgentResult(qnet, env.state, history, cfg, lengths)


def save_agent(result: AgentResult, path) -> None:
    atomic_write_text(path, dumps_json(result.to_dict()))


def load_agent(path) -> AgentResult:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    cfg = QLearningConfig(**d["config"])
    return AgentResult(model_from_dict(d["qnet"]), ThresholdState(float(d["threshold_m"])),
                       [float(x) for x in d["reward_history"]], cfg,
                       [int(x) for x in d.get("episode_lengths", [])])
