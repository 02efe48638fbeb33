"""Exploration policy: recurrent dueling double DQN over whole-episode replay."""
from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from playgrader.const import (
    BATCH_SIZE,
    DISCOUNT,
    EPSILON_END,
    EPSILON_HORIZON,
    EPSILON_START,
    FORGET_BIAS,
    LEARNING_RATE,
    MIN_BUFFER_EPISODES,
    REPLAY_CAPACITY,
    TARGET_SYNC_UPDATES,
)
from playgrader.exceptions import PlayGraderConfigurationException, PlayGraderIOException, PlayGraderUsageException
from playgrader.networks import QActor, QNetwork
from playgrader.tensor import Tensor, huber, no_grad
from playgrader.trajectory import Trajectory, TupleBatch

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = EPSILON_START
    end: float = EPSILON_END
    horizon: int = EPSILON_HORIZON

    def __call__(self, step: int) -> float:
        if step >= self.horizon:
            return self.end
        return self.start + (self.end - self.start) * step / self.horizon


def act_epsilon_greedy(q_values: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """Uniform action with probability ε, else the first maximising action."""
    if not 0.0 <= epsilon <= 1.0:
        raise PlayGraderConfigurationException("epsilon %s outside [0, 1].", epsilon)
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(0, len(q_values)))
    return int(np.argmax(q_values))


@dataclass
class StoredEpisode:
    trajectory: Trajectory
    rewards: np.ndarray  # exploration rewards, frozen at insertion
    label: tuple = ()


class ReplayBuffer:
    def __init__(self, capacity: int = REPLAY_CAPACITY, min_size: int = MIN_BUFFER_EPISODES):
        if capacity < 1:
            raise PlayGraderConfigurationException("Replay capacity must be positive, got %s.", capacity)
        self.capacity = capacity
        self.min_size = min_size
        self._episodes = deque(maxlen=capacity)

    def __len__(self):
        return len(self._episodes)

    @property
    def ready(self) -> bool:
        return len(self._episodes) >= self.min_size

    def insert(self, episode: StoredEpisode):
        if len(episode.rewards) != len(episode.trajectory):
            raise PlayGraderUsageException(
                "Episode has %s rewards for %s transitions.", len(episode.rewards), len(episode.trajectory))
        self._episodes.append(episode)

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[StoredEpisode]:
        if not self.ready or not self._episodes:
            raise PlayGraderUsageException(
                "Replay buffer holds %s episodes, sampling needs %s.", len(self._episodes), self.min_size)
        indices = rng.integers(0, len(self._episodes), size=batch_size)
        return [self._episodes[i] for i in indices]


def double_q_targets(rewards: np.ndarray, next_online: np.ndarray, next_target: np.ndarray,
                     terminal: np.ndarray, gamma: float = DISCOUNT) -> np.ndarray:
    """r_t + γ·Q_target(τ_{:t+1}, argmax_a Q_online(τ_{:t+1}, a)); just r_t at terminal steps."""
    best = np.argmax(next_online, axis=-1)
    bootstrap = np.take_along_axis(next_target, best[..., None], axis=-1)[..., 0]
    return np.where(terminal, rewards, rewards + gamma * bootstrap)


def sync_target(online: QNetwork, target: QNetwork):
    target.params.copy_from(online.params)


def dqn_update(online: QNetwork, target: QNetwork, batch: Sequence[StoredEpisode], lr: float = LEARNING_RATE,
               gamma: float = DISCOUNT, td_loss: str = "mse",
               rewards: Optional[Sequence[np.ndarray]] = None) -> float:
    """One Adam step on the TD error of every (episode, step) in ``batch``."""
    trajectories = [episode.trajectory for episode in batch]
    rewards = rewards if rewards is not None else [episode.rewards for episode in batch]
    tuples = TupleBatch.from_trajectories(trajectories, online.dtype)
    q = online.q_batch(tuples)
    with no_grad():
        q_target = target.q_batch(tuples).data

    times, columns, actions, targets = [], [], [], []
    for b, trajectory in enumerate(trajectories):
        steps = len(trajectory)
        terminal = np.zeros(steps, dtype=bool)
        terminal[-1] = trajectory.done
        targets.append(double_q_targets(np.asarray(rewards[b], dtype=online.dtype), q.data[1:steps + 1, b],
                                        q_target[1:steps + 1, b], terminal, gamma))
        times.append(np.arange(steps))
        columns.append(np.full(steps, b))
        actions.append(np.asarray(trajectory.actions))

    selected = q[(np.concatenate(times), np.concatenate(columns), np.concatenate(actions))]
    error = selected - Tensor(np.concatenate(targets).astype(online.dtype))
    if td_loss == "mse":
        loss = error.square().mean()
    elif td_loss == "huber":
        loss = huber(error).mean()
    else:
        raise PlayGraderConfigurationException("Unknown TD loss %s.", td_loss)
    return online.optimise(loss, lr, "TD")


class ExplorationPolicy:
    """Online and target Q-networks with their replay buffer and update counters."""

    def __init__(self, obs_dim: int, seed: int = 0, dtype=np.float64, forget_bias: float = FORGET_BIAS,
                 capacity: int = REPLAY_CAPACITY, min_buffer: int = MIN_BUFFER_EPISODES,
                 sync_every: int = TARGET_SYNC_UPDATES):
        self.online = QNetwork(obs_dim, seed, dtype, forget_bias)
        self.target = QNetwork(obs_dim, seed, dtype, forget_bias)
        sync_target(self.online, self.target)
        self.buffer = ReplayBuffer(capacity, min_buffer)
        self.sync_every = sync_every
        self.updates = 0

    def actor(self, epsilon: float, rng: np.random.Generator) -> QActor:
        return QActor(self.online, epsilon, rng, act_epsilon_greedy)

    def update(self, rng: np.random.Generator, batch_size: int = BATCH_SIZE, lr: float = LEARNING_RATE,
               gamma: float = DISCOUNT, td_loss: str = "mse",
               recompute: Optional[Callable[[StoredEpisode], np.ndarray]] = None) -> float:
        batch = self.buffer.sample(batch_size, rng)
        rewards = [recompute(episode) for episode in batch] if recompute else None
        loss = dqn_update(self.online, self.target, batch, lr, gamma, td_loss, rewards)
        self.updates += 1
        if self.updates % self.sync_every == 0:
            sync_target(self.online, self.target)
            _LOGGER.info("Synced target network after %s updates", self.updates)
        return loss


class TrainingLog:
    """Appends (step, loss, epsilon, mean_reward) rows to a CSV file."""

    columns = ("step", "loss", "epsilon", "mean_reward")

    def __init__(self, path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(self.columns)
        except OSError as e:
            raise PlayGraderIOException("Cannot create training log %s: %s", self.path, e) from e

    def append(self, step: int, loss: float, epsilon: float, mean_reward: float):
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow((step, repr(float(loss)), repr(float(epsilon)), repr(float(mean_reward))))
