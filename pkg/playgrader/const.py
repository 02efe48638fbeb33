from playgrader.events import ConsequenceKind, EventType, Speed


# ----- field geometry (unit square, y grows upwards) -----

FLOOR_Y = 0.0
TOP_Y = 1.0
GOAL_X_RANGE = (0.3, 0.7)
PADDLE_Y = 0.05
PADDLE_WIDTH = 0.2
PADDLE_START_X = 0.5

LAUNCH_POSITION = (0.5, 0.85)
LAUNCH_HEADING_DEGREES = (200.0, 340.0)

MAX_BALLS = 6
BALL_SLOT_WIDTH = 5  # present flag, x, y, vx, vy
BOUNCE_OBSERVATION_DIM = 1 + MAX_BALLS * BALL_SLOT_WIDTH

BOUNCE_MAX_STEPS = 100
SCORE_LIMIT = 30

BALL_SPEEDS = {
    Speed.VERY_SLOW: 0.02,
    Speed.SLOW: 0.03,
    Speed.NORMAL: 0.04,
    Speed.FAST: 0.06,
    Speed.VERY_FAST: 0.08,
}

PADDLE_SPEEDS = {
    Speed.VERY_SLOW: 0.02,
    Speed.SLOW: 0.035,
    Speed.NORMAL: 0.05,
    Speed.FAST: 0.07,
    Speed.VERY_FAST: 0.09,
}

HELD_OUT_SPEED = Speed.NORMAL
TRAINING_SPEEDS = tuple(speed for speed in Speed if speed != HELD_OUT_SPEED)

# consequences a correct program applies for each event
CORRECT_TEMPLATE = {
    EventType.BALL_HITS_PADDLE: frozenset({ConsequenceKind.BOUNCE}),
    EventType.BALL_HITS_WALL: frozenset({ConsequenceKind.BOUNCE}),
    EventType.BALL_HITS_GOAL: frozenset({ConsequenceKind.PLAYER_SCORE, ConsequenceKind.LAUNCH_BALL}),
    EventType.BALL_HITS_FLOOR: frozenset({ConsequenceKind.OPPONENT_SCORE, ConsequenceKind.LAUNCH_BALL}),
    EventType.PADDLE_MOVES: frozenset({ConsequenceKind.MOVE_PADDLE}),
    EventType.PROGRAM_STARTS: frozenset({ConsequenceKind.LAUNCH_BALL}),
}

# ----- breakout -----

BREAKOUT_ROWS = 10
BREAKOUT_MAX_ROWS = 14
BREAKOUT_COLUMNS = 8
BRICK_Y_RANGE = (0.6, 0.95)
BREAKOUT_PADDLE_HALF_HEIGHT = 0.03
BREAKOUT_LAUNCH_POSITION = (0.5, 0.45)
BREAKOUT_MAX_STEPS = 300
BREAKOUT_OBSERVATION_DIM = 1 + 4 + BREAKOUT_MAX_ROWS * BREAKOUT_COLUMNS

# ----- rubric (label order of the default 8-error rubric) -----

RUBRIC_8 = (
    (EventType.BALL_HITS_GOAL, ConsequenceKind.BOUNCE),
    (EventType.BALL_HITS_GOAL, ConsequenceKind.OPPONENT_SCORE),
    (EventType.BALL_HITS_GOAL, ConsequenceKind.LAUNCH_BALL),
    (EventType.BALL_HITS_FLOOR, ConsequenceKind.OPPONENT_SCORE),
    (EventType.BALL_HITS_WALL, ConsequenceKind.OPPONENT_SCORE),
    (EventType.PADDLE_MOVES, ConsequenceKind.MOVE_PADDLE),
    (EventType.BALL_HITS_PADDLE, ConsequenceKind.PLAYER_SCORE),
    (EventType.PROGRAM_STARTS, ConsequenceKind.LAUNCH_BALL),
)

DEFAULT_TOGGLE_PROBABILITY = 0.12
PROBE_EPISODES = 24

# ----- hyperparameters -----

DISCOUNT = 0.99
LEARNING_RATE = 0.0001
BATCH_SIZE = 32
MIN_BUFFER_EPISODES = 500
TARGET_SYNC_UPDATES = 5000
UPDATE_EVERY_STEPS = 4
GRAD_NORM_CLIP = 10.0
REPLAY_CAPACITY = 10000

EPSILON_START = 1.0
EPSILON_END = 0.01
EPSILON_HORIZON = 250000

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8
FORGET_BIAS = 1.0

# ----- network shapes -----

STATE_HIDDEN_DIM = 128
STATE_EMBED_DIM = 64
ACTION_EMBED_DIM = 16
REWARD_EMBED_DIM = 32
POLICY_TUPLE_DIM = 64
POLICY_LSTM_DIM = 64
CLASSIFIER_TUPLE_HIDDEN_DIM = 128
CLASSIFIER_TUPLE_DIM = 64
CLASSIFIER_LSTM_DIM = 128
CLASSIFIER_HEAD_DIM = 128

NUM_ACTIONS = 3
NULL_ACTION = NUM_ACTIONS  # dedicated embedding row of the start-token tuple

# ----- files -----

CONFIG_FILE = "config.json"
CURVES_FILE = "curves.csv"
TRAINING_LOG_FILE = "training_log_{index}.csv"
POLICY_CHECKPOINT = "policy_{index}.npz"
CLASSIFIER_CHECKPOINT = "classifier_{index}.npz"
METRICS_JSON_FILE = "metrics.json"
METRICS_CSV_FILE = "metrics.csv"

EXIT_OK = 0
EXIT_CONFIGURATION = 2
EXIT_IO = 3
