"""Scripted probe policies and the conformance oracle built on them.

Probes play a program the way a tester would: chase the ball to keep it in play,
dodge it to let it fall, or slide the paddle into it from the side. They read only
observations, and adapt when the paddle turns out to move backwards. The audit
trail of each episode then says which event occurred and what the program did.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from playgrader.bounce import BounceEnv, ProgramSpec
from playgrader.breakout import BreakoutEnv, BreakoutProgramSpec
from playgrader.const import (
    BALL_SLOT_WIDTH,
    BREAKOUT_COLUMNS,
    BREAKOUT_MAX_ROWS,
    BREAKOUT_PADDLE_HALF_HEIGHT,
    BREAKOUT_ROWS,
    CORRECT_TEMPLATE,
    MAX_BALLS,
    PADDLE_WIDTH,
    PADDLE_Y,
    PROBE_EPISODES,
    TOP_Y,
)
from playgrader.events import (
    ALL_CELLS,
    BREAKOUT_ERRORS,
    Action,
    BreakoutError,
    BreakoutEvent,
    ConsequenceKind,
)
from playgrader.trajectory import EventRecord, Transition, rollout

_LOGGER = logging.getLogger(__name__)

SKEWER_RUN = 3


@dataclass
class CellObservation:
    fired: bool = False  # event occurred with this consequence live
    deviates: bool = False  # applied consequence differed from the correct template


def landing_x(x: float, y: float, vx: float, vy: float, line_y: float = PADDLE_Y) -> float:
    """Where a ball next crosses ``line_y`` going down, folding side-wall reflections."""
    if vy < 0:
        steps = max(0.0, y - line_y) / -vy
    elif vy > 0:
        steps = (TOP_Y - y) / vy + (TOP_Y - line_y) / vy
    else:
        return x
    folded = (x + vx * steps) % 2.0
    return folded if folded <= 1.0 else 2.0 - folded


def bounce_balls(observation: np.ndarray):
    balls = []
    for slot in range(MAX_BALLS):
        start = 1 + slot * BALL_SLOT_WIDTH
        if observation[start] > 0:
            balls.append(tuple(observation[start + 1:start + BALL_SLOT_WIDTH]))
    return balls


class ProbeActor:
    """Steers the paddle towards ``target``; learns the paddle's direction and step from the first move."""

    def __init__(self):
        self.flip = 1
        self.paddle_step: Optional[float] = None
        self._commanded = Action.RIGHT

    def balls(self, observation):
        raise NotImplementedError

    def target(self, observation) -> Optional[float]:
        raise NotImplementedError

    def begin(self, observation) -> int:
        self._commanded = Action.RIGHT
        return self._commanded

    def advance(self, transition: Transition) -> int:
        if self.paddle_step is None and self._commanded != Action.STAY:
            delta = transition.next_observation[0] - transition.observation[0]
            if delta != 0:
                self.paddle_step = abs(delta)
                self.flip = 1 if (delta > 0) == (self._commanded.direction > 0) else -1
        if self.paddle_step is None:
            self._commanded = Action.LEFT if transition.next_observation[0] >= 1.0 else Action.RIGHT
            return self._commanded
        self._commanded = self._steer(transition.next_observation[0], self.target(transition.next_observation))
        return self._commanded

    def _steer(self, paddle_x: float, target: Optional[float]) -> Action:
        if target is None:
            return Action.STAY
        tolerance = self.paddle_step / 2
        if target > paddle_x + tolerance:
            direction = 1
        elif target < paddle_x - tolerance:
            direction = -1
        else:
            return Action.STAY
        return Action.RIGHT if direction * self.flip > 0 else Action.LEFT

    def next_landing(self, observation) -> Optional[float]:
        falling = [ball for ball in self.balls(observation) if ball[3] != 0]
        if not falling:
            return None

        def steps_to_paddle(ball):
            x, y, vx, vy = ball
            return (y - PADDLE_Y) / -vy if vy < 0 else (2 * TOP_Y - y - PADDLE_Y) / vy

        return landing_x(*min(falling, key=steps_to_paddle))


class BounceProbe(ProbeActor):
    def balls(self, observation):
        return bounce_balls(observation)


class TrackProbe(BounceProbe):
    """Keeps the ball in play: paddle hits, walls and goals."""

    def target(self, observation):
        return self.next_landing(observation)


class AvoidProbe(BounceProbe):
    """Stays clear of the next landing point so the ball reaches the floor."""

    def target(self, observation):
        landing = self.next_landing(observation)
        if landing is None:
            return None
        return 0.0 if landing > 0.5 else 1.0


def _note_records(records: Iterable[EventRecord], observations: Dict[Tuple, CellObservation]):
    for record in records:
        correct = CORRECT_TEMPLATE[record.event]
        for kind in ConsequenceKind:
            observation = observations.get((record.event, kind))
            if observation is None or (record.suppressed and kind != ConsequenceKind.BOUNCE):
                continue
            observation.fired = True
            if (kind in record.applied) != (kind in correct):
                observation.deviates = True


def observe_cells(program: ProgramSpec, cells: Sequence = ALL_CELLS, episodes: int = PROBE_EPISODES,
                  seed: int = 0) -> Dict[Tuple, CellObservation]:
    """Play ``program`` with the probes and report, per cell, whether it was seen and whether it deviated."""
    observations = {cell: CellObservation() for cell in cells}
    env = BounceEnv(program)
    probes = (TrackProbe, AvoidProbe)
    for episode in range(episodes):
        trajectory = rollout(env, seed + episode, probes[episode % len(probes)]())
        _note_records(trajectory.events(), observations)
        if all(o.fired for o in observations.values()):
            _LOGGER.debug("All %s cells seen after %s probe episodes", len(observations), episode + 1)
            break
    return observations


def observable_label(program: ProgramSpec, cells: Sequence, seed: int = 0) -> Tuple[int, ...]:
    """Label bits: a cell counts only when the probes saw it deviate."""
    observations = observe_cells(program, cells, seed=seed)
    return tuple(int(observations[cell].deviates) for cell in cells)


# -----breakout-----

def brick_rows(observation: np.ndarray) -> int:
    flags = observation[5:].reshape(BREAKOUT_MAX_ROWS, BREAKOUT_COLUMNS)
    return int(np.any(flags > 0, axis=1).sum())


class BreakoutProbe(ProbeActor):
    def balls(self, observation):
        return [tuple(observation[1:5])]


class BreakoutTrackProbe(BreakoutProbe):
    def target(self, observation):
        return self.next_landing(observation)


class BreakoutAvoidProbe(BreakoutProbe):
    """Lets the ball reach the floor."""

    def target(self, observation):
        landing = self.next_landing(observation)
        if landing is None:
            return None
        return 0.0 if landing > 0.5 else 1.0


class SideContactProbe(BreakoutProbe):
    """Waits beside the falling ball, then slides under it from the side once it is level with the paddle.

    The paddle waits on the side the ball drifts away from, so the ball cannot land on its top face.
    """

    gap = 0.02

    def target(self, observation):
        x, y, vx, vy = observation[1:5]
        band_top = PADDLE_Y + BREAKOUT_PADDLE_HALF_HEIGHT
        if y <= band_top:
            return x
        entry = landing_x(x, y, vx, vy, line_y=band_top)
        side = -1.0 if vx >= 0 else 1.0
        wait = entry + side * (PADDLE_WIDTH / 2 + self.gap)
        if not 0.0 <= wait <= 1.0:
            wait = entry - side * (PADDLE_WIDTH / 2 + self.gap)
        return wait


def longest_reversal_run(transitions: Sequence[Transition]) -> int:
    best = run = 0
    for transition in transitions:
        reversed_here = any(
            record.event == BreakoutEvent.BALL_HITS_PADDLE and ConsequenceKind.BOUNCE in record.applied
            for record in transition.events)
        run = run + 1 if reversed_here else 0
        best = max(best, run)
    return best


def observe_breakout(program: BreakoutProgramSpec, episodes: int = PROBE_EPISODES,
                     seed: int = 0) -> Dict[BreakoutError, bool]:
    """Which of the six breakout errors the probes exposed in ``program``."""
    detected = {error: False for error in BREAKOUT_ERRORS}
    env = BreakoutEnv(program)
    probes = (BreakoutTrackProbe, SideContactProbe, BreakoutAvoidProbe)
    for episode in range(episodes):
        actor = probes[episode % len(probes)]()
        trajectory = rollout(env, seed + episode, actor)
        detected[BreakoutError.WRONG_ROW_COUNT] |= brick_rows(trajectory.initial_observation) != BREAKOUT_ROWS
        detected[BreakoutError.REVERSED_PADDLE] |= actor.flip < 0
        detected[BreakoutError.PADDLE_SKEWER] |= longest_reversal_run(trajectory.transitions) >= SKEWER_RUN
        for transition in trajectory.transitions:
            for record in transition.events:
                if record.event == BreakoutEvent.BALL_HITS_BRICK:
                    detected[BreakoutError.NO_DELETE_BRICK] |= not record.brick_deleted
                    detected[BreakoutError.NO_BOUNCE_OFF_BRICK] |= ConsequenceKind.BOUNCE not in record.applied
                elif record.event == BreakoutEvent.BALL_HITS_FLOOR:
                    detected[BreakoutError.BOUNCE_OFF_FLOOR] |= not transition.done
    return detected


def breakout_label(program: BreakoutProgramSpec, seed: int = 0) -> Tuple[int, ...]:
    detected = observe_breakout(program, seed=seed)
    return tuple(int(detected[error]) for error in BREAKOUT_ERRORS)
