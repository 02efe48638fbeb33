"""Transitions, trajectories and the tuple arrays the recurrent networks consume."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from playgrader.const import NULL_ACTION
from playgrader.events import BreakoutEvent, ConsequenceKind, EventType
from playgrader.exceptions import PlayGraderParamException


@dataclass(frozen=True)
class EventRecord:
    """One event occurrence and the consequences the program applied to it."""

    event: Union[EventType, BreakoutEvent]
    ball_id: Optional[int]
    applied: FrozenSet[ConsequenceKind]
    suppressed: bool = False
    direction: int = 0
    brick: Optional[Tuple[int, int]] = None
    brick_deleted: bool = False

    def has(self, kind: ConsequenceKind) -> bool:
        return kind in self.applied


@dataclass(frozen=True)
class Transition:
    observation: np.ndarray
    action: int
    reward: float
    next_observation: np.ndarray
    done: bool
    events: Tuple[EventRecord, ...] = ()


@dataclass
class Trajectory:
    """s_0 followed by the transitions of one episode.

    The network view prepends the start-token tuple (s_0, null action, 0, s_0), so a
    trajectory of T transitions has T+1 tuples and T+1 prefixes.
    """

    initial_observation: np.ndarray
    transitions: List[Transition] = field(default_factory=list)
    start_events: Tuple[EventRecord, ...] = ()

    def __post_init__(self):
        if self.initial_observation is None or np.size(self.initial_observation) == 0:
            raise PlayGraderParamException("Trajectory needs an initial observation.")

    def __len__(self):
        return len(self.transitions)

    def append(self, transition: Transition):
        self.transitions.append(transition)

    @property
    def done(self) -> bool:
        return bool(self.transitions) and self.transitions[-1].done

    @property
    def actions(self) -> List[int]:
        return [int(t.action) for t in self.transitions]

    @property
    def env_rewards(self) -> List[float]:
        return [t.reward for t in self.transitions]

    @property
    def observation_width(self) -> int:
        return int(np.size(self.initial_observation))

    def events(self) -> List[EventRecord]:
        records = list(self.start_events)
        for transition in self.transitions:
            records.extend(transition.events)
        return records

    def prefix(self, length: int) -> "Trajectory":
        return Trajectory(self.initial_observation, self.transitions[:length], self.start_events)

    def tuple_arrays(self, dtype=np.float64):
        """(states, actions, rewards, next_states) for the T+1 tuples, start token first."""
        s0 = np.asarray(self.initial_observation, dtype=dtype)
        states = np.stack([s0] + [np.asarray(t.observation, dtype=dtype) for t in self.transitions])
        next_states = np.stack([s0] + [np.asarray(t.next_observation, dtype=dtype) for t in self.transitions])
        actions = np.array([NULL_ACTION] + self.actions, dtype=np.int64)
        rewards = np.array([0.0] + self.env_rewards, dtype=dtype)[:, None]
        return states, actions, rewards, next_states


@dataclass
class TupleBatch:
    """Tuple arrays of several trajectories, time-major and zero padded to the longest."""

    states: np.ndarray  # (L, B, obs)
    actions: np.ndarray  # (L, B)
    rewards: np.ndarray  # (L, B, 1)
    next_states: np.ndarray  # (L, B, obs)
    lengths: np.ndarray  # tuples per trajectory, T_b + 1

    @property
    def steps(self) -> int:
        return self.states.shape[0]

    @property
    def batch_size(self) -> int:
        return self.states.shape[1]

    @classmethod
    def from_trajectories(cls, trajectories: Sequence[Trajectory], dtype=np.float64) -> "TupleBatch":
        if not trajectories:
            raise PlayGraderParamException("Cannot batch zero trajectories.")
        widths = {t.observation_width for t in trajectories}
        if len(widths) != 1:
            raise PlayGraderParamException("Trajectories mix observation widths %s.", sorted(widths))
        width = widths.pop()
        lengths = np.array([len(t) + 1 for t in trajectories])
        steps, batch = int(lengths.max()), len(trajectories)
        states = np.zeros((steps, batch, width), dtype=dtype)
        next_states = np.zeros((steps, batch, width), dtype=dtype)
        actions = np.full((steps, batch), NULL_ACTION, dtype=np.int64)
        rewards = np.zeros((steps, batch, 1), dtype=dtype)
        for b, trajectory in enumerate(trajectories):
            s, a, r, s_next = trajectory.tuple_arrays(dtype)
            n = lengths[b]
            states[:n, b], actions[:n, b], rewards[:n, b], next_states[:n, b] = s, a, r, s_next
        return cls(states, actions, rewards, next_states, lengths)


class Actor(Protocol):
    def begin(self, observation: np.ndarray) -> int:
        ...

    def advance(self, transition: Transition) -> int:
        ...


def rollout(env, seed: Optional[int], actor: Actor) -> Trajectory:
    """Play one full episode of ``env`` with ``actor`` choosing every action."""
    observation, info = env.reset(seed=seed)
    trajectory = Trajectory(observation, start_events=tuple(info.get("events", ())))
    action = actor.begin(observation)
    while True:
        _, _, terminated, truncated, info = env.step(action)
        transition = info["transition"]
        trajectory.append(transition)
        if terminated or truncated:
            return trajectory
        action = actor.advance(transition)
