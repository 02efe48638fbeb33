"""Bounce: a paddle game whose dynamics follow a program's event/consequence table."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Tuple

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from playgrader.const import (
    BALL_SPEEDS,
    BOUNCE_MAX_STEPS,
    BOUNCE_OBSERVATION_DIM,
    CORRECT_TEMPLATE,
    FLOOR_Y,
    GOAL_X_RANGE,
    LAUNCH_HEADING_DEGREES,
    LAUNCH_POSITION,
    MAX_BALLS,
    PADDLE_SPEEDS,
    PADDLE_START_X,
    PADDLE_WIDTH,
    PADDLE_Y,
    SCORE_LIMIT,
    TOP_Y,
)
from playgrader.events import (
    INVALID_CELLS,
    TERMINAL_EVENTS,
    Action,
    ConsequenceKind,
    EventType,
    Speed,
    cell_name,
    parse_cell,
)
from playgrader.exceptions import PlayGraderParamException, PlayGraderUsageException
from playgrader.trajectory import EventRecord, Transition

_LOGGER = logging.getLogger(__name__)

Cell = Tuple[EventType, ConsequenceKind]


@dataclass(frozen=True)
class ProgramSpec:
    """One student program: the cells deviating from the correct template plus speeds."""

    deviations: FrozenSet[Cell] = frozenset()
    ball_speed: Speed = Speed.NORMAL
    paddle_speed: Speed = Speed.NORMAL

    def __post_init__(self):
        object.__setattr__(self, "deviations", frozenset(self.deviations))
        invalid = self.deviations & INVALID_CELLS
        if invalid:
            raise PlayGraderParamException("Program toggles invalid cells %s.", sorted(cell_name(c) for c in invalid))

    def toggled(self, event: EventType) -> FrozenSet[ConsequenceKind]:
        return frozenset(kind for e, kind in self.deviations if e == event)

    def effective(self, event: EventType) -> FrozenSet[ConsequenceKind]:
        """Consequences this program applies when ``event`` fires."""
        return CORRECT_TEMPLATE[event] ^ self.toggled(event)

    @property
    def ball_speed_value(self) -> float:
        return BALL_SPEEDS[self.ball_speed]

    @property
    def paddle_speed_value(self) -> float:
        return PADDLE_SPEEDS[self.paddle_speed]

    def with_speeds(self, ball_speed: Speed, paddle_speed: Speed) -> "ProgramSpec":
        return ProgramSpec(self.deviations, ball_speed, paddle_speed)

    def to_json(self) -> dict:
        return {
            "deviations": sorted([event.value, kind.value] for event, kind in self.deviations),
            "ball_speed": self.ball_speed.value,
            "paddle_speed": self.paddle_speed.value,
        }

    @classmethod
    def from_json(cls, data: dict) -> "ProgramSpec":
        try:
            deviations = frozenset(parse_cell(f"{event}:{kind}") for event, kind in data.get("deviations", []))
            return cls(
                deviations,
                Speed(data.get("ball_speed", Speed.NORMAL.value)),
                Speed(data.get("paddle_speed", Speed.NORMAL.value)),
            )
        except (TypeError, ValueError) as e:
            raise PlayGraderParamException("Malformed program spec %s: %s", data, e) from e


@dataclass
class Ball:
    ball_id: int
    x: float
    y: float
    vx: float
    vy: float
    alive: bool = True


@dataclass
class EnvState:
    paddle_x: float = PADDLE_START_X
    balls: List[Ball] = field(default_factory=list)
    player_score: int = 0
    opponent_score: int = 0
    step_index: int = 0
    next_ball_id: int = 0
    # scores already paid out as reward; zero before the start event
    paid_player: int = 0
    paid_opponent: int = 0
    done: bool = False

    @property
    def live_balls(self) -> List[Ball]:
        return [ball for ball in self.balls if ball.alive]


class BounceEnv(gym.Env):
    """Episodic Bounce simulator for one program.

    ``reset`` fires the program-start event, ``step`` resolves the paddle event
    then each ball in creation order (paddle, wall, goal, floor after motion).
    ``info["transition"]`` carries the audit of every event occurrence.
    """

    metadata = {"render_modes": []}
    max_steps = BOUNCE_MAX_STEPS

    def __init__(self, program: ProgramSpec):
        super().__init__()
        self.program = program
        self.observation_space = spaces.Box(low=-1.0, high=1.0, shape=(BOUNCE_OBSERVATION_DIM,), dtype=np.float64)
        self.action_space = spaces.Discrete(len(Action))
        self.state: Optional[EnvState] = None
        self._records: List[EventRecord] = []

    # -----episode-----

    def reset(self, *, seed=None, options=None):
        super().reset(seed=seed)
        self.state = EnvState()
        self._records = []
        self._resolve_program_start()
        return self.encode_observation(), {"events": list(self._records)}

    def step(self, action):
        state = self.state
        if state is None or state.done:
            raise PlayGraderUsageException("Cannot step a finished or unstarted episode.")
        action = Action(int(action))
        observation = self.encode_observation()
        self._records = []

        if action != Action.STAY:
            self._resolve_paddle_moves(action)

        for ball in list(state.balls):
            if ball.alive:
                self._advance_ball(ball)
        state.balls = state.live_balls
        state.step_index += 1

        reward = self._collect_reward()
        terminated = state.player_score > SCORE_LIMIT or state.opponent_score > SCORE_LIMIT
        truncated = state.step_index >= self.max_steps and not terminated
        state.done = terminated or truncated

        next_observation = self.encode_observation()
        transition = Transition(observation, action, reward, next_observation, state.done, tuple(self._records))
        return next_observation, reward, terminated, truncated, {"transition": transition}

    def encode_observation(self) -> np.ndarray:
        state = self.state
        observation = np.zeros(BOUNCE_OBSERVATION_DIM)
        observation[0] = state.paddle_x
        for slot, ball in enumerate(state.live_balls[:MAX_BALLS]):
            start = 1 + slot * 5
            observation[start:start + 5] = (1.0, ball.x, ball.y, ball.vx, ball.vy)
        return observation

    def place_ball(self, x: float, y: float, vx: float, vy: float) -> Ball:
        """Add a ball at an exact position, for scripted scenarios."""
        ball = Ball(self.state.next_ball_id, x, y, vx, vy)
        self.state.next_ball_id += 1
        self.state.balls.append(ball)
        return ball

    # -----events-----

    def _collect_reward(self) -> float:
        state = self.state
        reward = (state.player_score - state.paid_player) - (state.opponent_score - state.paid_opponent)
        state.paid_player = state.player_score
        state.paid_opponent = state.opponent_score
        return float(reward)

    def _launch(self):
        state = self.state
        if len(state.live_balls) >= MAX_BALLS:
            _LOGGER.debug("Dropping launch, %s balls already live", MAX_BALLS)
            return
        low, high = LAUNCH_HEADING_DEGREES
        heading = math.radians(self.np_random.uniform(low, high))
        speed = self.program.ball_speed_value
        self.place_ball(LAUNCH_POSITION[0], LAUNCH_POSITION[1], speed * math.cos(heading), speed * math.sin(heading))

    def _move_paddle(self, direction: int):
        state = self.state
        state.paddle_x = min(1.0, max(0.0, state.paddle_x + direction * self.program.paddle_speed_value))

    def _apply_side_effects(self, effective: FrozenSet[ConsequenceKind]):
        if ConsequenceKind.PLAYER_SCORE in effective:
            self.state.player_score += 1
        if ConsequenceKind.OPPONENT_SCORE in effective:
            self.state.opponent_score += 1
        if ConsequenceKind.LAUNCH_BALL in effective:
            self._launch()

    def _resolve_program_start(self):
        effective = self.program.effective(EventType.PROGRAM_STARTS)
        if ConsequenceKind.MOVE_PADDLE in effective:
            self._move_paddle(-1)
        self._apply_side_effects(effective)
        self._records.append(EventRecord(EventType.PROGRAM_STARTS, None, effective))

    def _resolve_paddle_moves(self, action: Action):
        effective = self.program.effective(EventType.PADDLE_MOVES)
        # the correct program moves as commanded; the toggled cell reverses it
        direction = action.direction if ConsequenceKind.MOVE_PADDLE in effective else -action.direction
        self._move_paddle(direction)
        self._apply_side_effects(effective)
        self._records.append(EventRecord(EventType.PADDLE_MOVES, None, effective, direction=direction))

    def _resolve_ball_event(self, event: EventType, ball: Ball, reflect_x: bool):
        effective = self.program.effective(event)
        bounces = ConsequenceKind.BOUNCE in effective

        if event in TERMINAL_EVENTS and bounces:
            # bouncing out of the goal/floor suppresses every other consequence of the event
            self._reflect(ball, reflect_x)
            self._records.append(EventRecord(event, ball.ball_id, frozenset({ConsequenceKind.BOUNCE}), suppressed=True))
            return

        if bounces:
            self._reflect(ball, reflect_x)
        elif event != EventType.BALL_HITS_PADDLE:
            ball.alive = False

        if ConsequenceKind.MOVE_PADDLE in effective:
            self._move_paddle(-1)
        self._apply_side_effects(effective)
        self._records.append(EventRecord(event, ball.ball_id, effective))

    @staticmethod
    def _reflect(ball: Ball, reflect_x: bool):
        """Mirror off a side wall, or off the top edge (wall or goal)."""
        if reflect_x:
            ball.vx = -ball.vx
            ball.x = -ball.x if ball.x < 0 else 2.0 - ball.x
        else:
            ball.vy = -ball.vy
            ball.y = 2.0 * TOP_Y - ball.y

    def _advance_ball(self, ball: Ball):
        state = self.state
        prev_x, prev_y = ball.x, ball.y
        ball.x += ball.vx
        ball.y += ball.vy

        if ball.vy < 0 and prev_y >= PADDLE_Y > ball.y:
            cross_x = prev_x + ball.vx * (prev_y - PADDLE_Y) / -ball.vy
            if abs(cross_x - state.paddle_x) <= PADDLE_WIDTH / 2:
                self._resolve_paddle_hit(ball)

        if ball.alive and (ball.x < 0.0 or ball.x > 1.0):
            self._resolve_ball_event(EventType.BALL_HITS_WALL, ball, reflect_x=True)

        if ball.alive and ball.y > TOP_Y:
            cross_x = ball.x - ball.vx * (ball.y - TOP_Y) / ball.vy
            in_goal = GOAL_X_RANGE[0] <= cross_x <= GOAL_X_RANGE[1]
            event = EventType.BALL_HITS_GOAL if in_goal else EventType.BALL_HITS_WALL
            self._resolve_ball_event(event, ball, reflect_x=False)

        if ball.alive and ball.y < FLOOR_Y:
            self._resolve_floor(ball)

    def _resolve_paddle_hit(self, ball: Ball):
        effective = self.program.effective(EventType.BALL_HITS_PADDLE)
        if ConsequenceKind.BOUNCE in effective:
            ball.vy = -ball.vy
            ball.y = 2.0 * PADDLE_Y - ball.y
        if ConsequenceKind.MOVE_PADDLE in effective:
            self._move_paddle(-1)
        self._apply_side_effects(effective)
        self._records.append(EventRecord(EventType.BALL_HITS_PADDLE, ball.ball_id, effective))

    def _resolve_floor(self, ball: Ball):
        effective = self.program.effective(EventType.BALL_HITS_FLOOR)
        if ConsequenceKind.BOUNCE in effective:
            ball.vy = -ball.vy
            ball.y = -ball.y
            self._records.append(EventRecord(EventType.BALL_HITS_FLOOR, ball.ball_id, frozenset({ConsequenceKind.BOUNCE}), suppressed=True))
            return
        ball.alive = False
        if ConsequenceKind.MOVE_PADDLE in effective:
            self._move_paddle(-1)
        self._apply_side_effects(effective)
        self._records.append(EventRecord(EventType.BALL_HITS_FLOOR, ball.ball_id, effective))
