"""Breakout: one ball, a paddle and a brick wall; reward is always zero."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from playgrader.const import (
    BALL_SPEEDS,
    BREAKOUT_COLUMNS,
    BREAKOUT_LAUNCH_POSITION,
    BREAKOUT_MAX_ROWS,
    BREAKOUT_MAX_STEPS,
    BREAKOUT_OBSERVATION_DIM,
    BREAKOUT_PADDLE_HALF_HEIGHT,
    BREAKOUT_ROWS,
    BRICK_Y_RANGE,
    LAUNCH_HEADING_DEGREES,
    PADDLE_SPEEDS,
    PADDLE_START_X,
    PADDLE_WIDTH,
    PADDLE_Y,
)
from playgrader.events import BREAKOUT_ERRORS, Action, BreakoutError, BreakoutEvent, ConsequenceKind, Speed
from playgrader.exceptions import PlayGraderParamException, PlayGraderUsageException
from playgrader.trajectory import EventRecord, Transition

_LOGGER = logging.getLogger(__name__)

_BOUNCE = frozenset({ConsequenceKind.BOUNCE})
_NOTHING: frozenset = frozenset()


@dataclass(frozen=True)
class BreakoutProgramSpec:
    errors: BreakoutError = BreakoutError.NONE
    rows: int = BREAKOUT_ROWS
    ball_speed: Speed = Speed.NORMAL
    paddle_speed: Speed = Speed.NORMAL

    def __post_init__(self):
        wrong_rows = BreakoutError.WRONG_ROW_COUNT in self.errors
        if wrong_rows == (self.rows == BREAKOUT_ROWS):
            raise PlayGraderParamException(
                "Row count %s does not agree with the wrong_row_count flag (%s).", self.rows, wrong_rows)
        if not 1 <= self.rows <= BREAKOUT_MAX_ROWS:
            raise PlayGraderParamException("Row count %s outside [1, %s].", self.rows, BREAKOUT_MAX_ROWS)

    def has(self, error: BreakoutError) -> bool:
        return error in self.errors

    @property
    def ball_speed_value(self) -> float:
        return BALL_SPEEDS[self.ball_speed]

    @property
    def paddle_speed_value(self) -> float:
        return PADDLE_SPEEDS[self.paddle_speed]

    def with_speeds(self, ball_speed: Speed, paddle_speed: Speed) -> "BreakoutProgramSpec":
        return BreakoutProgramSpec(self.errors, self.rows, ball_speed, paddle_speed)

    def to_json(self) -> dict:
        return {
            "errors": [error.name.lower() for error in BREAKOUT_ERRORS if error in self.errors],
            "rows": self.rows,
            "ball_speed": self.ball_speed.value,
            "paddle_speed": self.paddle_speed.value,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BreakoutProgramSpec":
        try:
            errors = BreakoutError.NONE
            for name in data.get("errors", []):
                errors |= BreakoutError[name.upper()]
            return cls(
                errors,
                int(data.get("rows", BREAKOUT_ROWS)),
                Speed(data.get("ball_speed", Speed.NORMAL.value)),
                Speed(data.get("paddle_speed", Speed.NORMAL.value)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise PlayGraderParamException("Malformed breakout program %s: %s", data, e) from e


@dataclass
class BreakoutState:
    paddle_x: float = PADDLE_START_X
    ball: np.ndarray = field(default_factory=lambda: np.zeros(4))  # x, y, vx, vy
    bricks: np.ndarray = field(default_factory=lambda: np.zeros((BREAKOUT_ROWS, BREAKOUT_COLUMNS), dtype=bool))
    step_index: int = 0
    done: bool = False

    @property
    def bricks_alive(self) -> int:
        return int(self.bricks.sum())


class BreakoutEnv(gym.Env):
    metadata = {"render_modes": []}
    max_steps = BREAKOUT_MAX_STEPS

    def __init__(self, program: BreakoutProgramSpec):
        super().__init__()
        self.program = program
        self.observation_space = spaces.Box(low=-1.0, high=1.0, shape=(BREAKOUT_OBSERVATION_DIM,), dtype=np.float64)
        self.action_space = spaces.Discrete(len(Action))
        self.state: Optional[BreakoutState] = None
        self.row_height = (BRICK_Y_RANGE[1] - BRICK_Y_RANGE[0]) / program.rows

    def reset(self, *, seed=None, options=None):
        super().reset(seed=seed)
        self.state = BreakoutState(bricks=np.ones((self.program.rows, BREAKOUT_COLUMNS), dtype=bool))
        low, high = LAUNCH_HEADING_DEGREES
        heading = math.radians(self.np_random.uniform(low, high))
        speed = self.program.ball_speed_value
        self.place_ball(*BREAKOUT_LAUNCH_POSITION, speed * math.cos(heading), speed * math.sin(heading))
        return self.encode_observation(), {"events": ()}

    def place_ball(self, x: float, y: float, vx: float, vy: float):
        self.state.ball = np.array([x, y, vx, vy], dtype=np.float64)

    def encode_observation(self) -> np.ndarray:
        state = self.state
        observation = np.zeros(BREAKOUT_OBSERVATION_DIM)
        observation[0] = state.paddle_x
        observation[1:5] = state.ball
        flags = np.zeros((BREAKOUT_MAX_ROWS, BREAKOUT_COLUMNS))
        flags[:self.program.rows] = state.bricks
        observation[5:] = flags.reshape(-1)
        return observation

    def step(self, action):
        state = self.state
        if state is None or state.done:
            raise PlayGraderUsageException("Cannot step a finished or unstarted episode.")
        action = Action(int(action))
        observation = self.encode_observation()
        records = []

        if action != Action.STAY:
            direction = -action.direction if self.program.has(BreakoutError.REVERSED_PADDLE) else action.direction
            state.paddle_x = min(1.0, max(0.0, state.paddle_x + direction * self.program.paddle_speed_value))
            records.append(EventRecord(BreakoutEvent.PADDLE_MOVES, None, frozenset({ConsequenceKind.MOVE_PADDLE}),
                                       direction=direction))

        floor_hit = self._advance_ball(records)
        state.step_index += 1

        terminated = floor_hit or state.bricks_alive == 0
        truncated = state.step_index >= self.max_steps and not terminated
        state.done = terminated or truncated
        next_observation = self.encode_observation()
        transition = Transition(observation, action, 0.0, next_observation, state.done, tuple(records))
        return next_observation, 0.0, terminated, truncated, {"transition": transition}

    def _brick_at(self, x: float, y: float):
        if not BRICK_Y_RANGE[0] <= y < BRICK_Y_RANGE[1] or not 0.0 <= x <= 1.0:
            return None
        # row 0 is the top row
        row = int((BRICK_Y_RANGE[1] - y) / self.row_height)
        column = min(int(x * BREAKOUT_COLUMNS), BREAKOUT_COLUMNS - 1)
        if row >= self.program.rows or not self.state.bricks[row, column]:
            return None
        return row, column

    def _advance_ball(self, records) -> bool:
        """Move the ball and resolve brick, wall, paddle and floor contacts; True if the floor ends the episode."""
        state, program = self.state, self.program
        ball = state.ball
        previous_x, previous_y = ball[0], ball[1]
        velocity_x, velocity_y = ball[2], ball[3]
        ball[0] += ball[2]
        ball[1] += ball[3]

        brick = self._brick_at(ball[0], ball[1])
        if brick is not None:
            bounces = not program.has(BreakoutError.NO_BOUNCE_OFF_BRICK)
            deleted = not program.has(BreakoutError.NO_DELETE_BRICK)
            if bounces:
                # back out of the brick so a surviving brick cannot trap the ball
                ball[3] = -ball[3]
                ball[1] = previous_y
            if deleted:
                state.bricks[brick] = False
            records.append(EventRecord(BreakoutEvent.BALL_HITS_BRICK, 0, _BOUNCE if bounces else _NOTHING,
                                       brick=brick, brick_deleted=deleted))

        if ball[0] < 0.0 or ball[0] > 1.0:
            ball[2] = -ball[2]
            ball[0] = -ball[0] if ball[0] < 0.0 else 2.0 - ball[0]
            records.append(EventRecord(BreakoutEvent.BALL_HITS_WALL, 0, _BOUNCE))
        if ball[1] > 1.0:
            ball[3] = -ball[3]
            ball[1] = 2.0 - ball[1]
            records.append(EventRecord(BreakoutEvent.BALL_HITS_WALL, 0, _BOUNCE))

        crossed = False
        if velocity_y < 0 and ball[3] < 0 and previous_y >= PADDLE_Y > ball[1]:
            # a fast ball can step over the contact band in one move
            cross_x = previous_x + velocity_x * (previous_y - PADDLE_Y) / -velocity_y
            crossed = abs(cross_x - state.paddle_x) <= PADDLE_WIDTH / 2
        in_paddle = crossed or (abs(ball[0] - state.paddle_x) <= PADDLE_WIDTH / 2
                                and abs(ball[1] - PADDLE_Y) <= BREAKOUT_PADDLE_HALF_HEIGHT)
        if in_paddle:
            if crossed:
                ball[1] = 2.0 * PADDLE_Y - ball[1]
            # the correct paddle only turns a falling ball; the skewer turns it on every contact
            reverses = ball[3] < 0 or program.has(BreakoutError.PADDLE_SKEWER)
            if reverses:
                ball[3] = -ball[3]
            records.append(EventRecord(BreakoutEvent.BALL_HITS_PADDLE, 0, _BOUNCE if reverses else _NOTHING))

        if ball[1] < 0.0:
            if program.has(BreakoutError.BOUNCE_OFF_FLOOR):
                ball[3] = -ball[3]
                ball[1] = -ball[1]
                records.append(EventRecord(BreakoutEvent.BALL_HITS_FLOOR, 0, _BOUNCE))
                return False
            records.append(EventRecord(BreakoutEvent.BALL_HITS_FLOOR, 0, _NOTHING))
            _LOGGER.debug("Ball reached the floor after %s steps", state.step_index + 1)
            return True
        return False
