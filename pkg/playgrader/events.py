# event and consequence grammar of student program errors

from enum import Enum, Flag, IntEnum, auto


class EventType(Enum):
    BALL_HITS_PADDLE = "ball_hits_paddle"
    BALL_HITS_WALL = "ball_hits_wall"
    BALL_HITS_GOAL = "ball_hits_goal"
    BALL_HITS_FLOOR = "ball_hits_floor"
    PADDLE_MOVES = "paddle_moves"
    PROGRAM_STARTS = "program_starts"

    @property
    def is_ball_event(self) -> bool:
        return self in BALL_EVENTS


class ConsequenceKind(Enum):
    BOUNCE = "bounce"
    PLAYER_SCORE = "player_score"
    OPPONENT_SCORE = "opponent_score"
    LAUNCH_BALL = "launch_ball"
    MOVE_PADDLE = "move_paddle"


BALL_EVENTS = (
    EventType.BALL_HITS_PADDLE,
    EventType.BALL_HITS_WALL,
    EventType.BALL_HITS_GOAL,
    EventType.BALL_HITS_FLOOR,
)

# events whose correct consequence removes the ball
TERMINAL_EVENTS = (EventType.BALL_HITS_GOAL, EventType.BALL_HITS_FLOOR)

INVALID_CELLS = frozenset({
    (EventType.PADDLE_MOVES, ConsequenceKind.BOUNCE),
    (EventType.PROGRAM_STARTS, ConsequenceKind.BOUNCE),
})

ALL_CELLS = tuple(
    (event, kind)
    for event in EventType
    for kind in ConsequenceKind
    if (event, kind) not in INVALID_CELLS
)


class BreakoutEvent(Enum):
    BALL_HITS_BRICK = "ball_hits_brick"
    BALL_HITS_PADDLE = "ball_hits_paddle"
    BALL_HITS_WALL = "ball_hits_wall"
    BALL_HITS_FLOOR = "ball_hits_floor"
    PADDLE_MOVES = "paddle_moves"


class Action(IntEnum):
    LEFT = 0
    RIGHT = 1
    STAY = 2

    @property
    def direction(self) -> int:
        return {Action.LEFT: -1, Action.RIGHT: 1, Action.STAY: 0}[self]


class Speed(Enum):
    VERY_SLOW = "very_slow"
    SLOW = "slow"
    NORMAL = "normal"
    FAST = "fast"
    VERY_FAST = "very_fast"


class BreakoutError(Flag):
    NONE = 0

    PADDLE_SKEWER = auto()
    NO_DELETE_BRICK = auto()
    NO_BOUNCE_OFF_BRICK = auto()
    WRONG_ROW_COUNT = auto()
    REVERSED_PADDLE = auto()
    BOUNCE_OFF_FLOOR = auto()


# label order of the breakout rubric
BREAKOUT_ERRORS = (
    BreakoutError.PADDLE_SKEWER,
    BreakoutError.NO_DELETE_BRICK,
    BreakoutError.NO_BOUNCE_OFF_BRICK,
    BreakoutError.WRONG_ROW_COUNT,
    BreakoutError.REVERSED_PADDLE,
    BreakoutError.BOUNCE_OFF_FLOOR,
)


def cell_name(cell) -> str:
    event, kind = cell
    return f"{event.value}:{kind.value}"


def parse_cell(name: str):
    event, kind = name.split(":")
    return EventType(event), ConsequenceKind(kind)
