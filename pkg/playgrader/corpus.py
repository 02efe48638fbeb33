"""Synthetic labeled programs: rubrics, sampling, unobservability masking, JSONL files and splits."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from playgrader.bounce import ProgramSpec
from playgrader.breakout import BreakoutProgramSpec
from playgrader.const import (
    BREAKOUT_MAX_ROWS,
    BREAKOUT_ROWS,
    DEFAULT_TOGGLE_PROBABILITY,
    HELD_OUT_SPEED,
    RUBRIC_8,
    TRAINING_SPEEDS,
)
from playgrader.events import (
    ALL_CELLS,
    BREAKOUT_ERRORS,
    BreakoutError,
    ConsequenceKind,
    EventType,
    Speed,
    cell_name,
    parse_cell,
)
from playgrader.exceptions import (
    PlayGraderConfigurationException,
    PlayGraderIOException,
    PlayGraderParamException,
    PlayGraderParseException,
)
from playgrader.probes import observable_label

_LOGGER = logging.getLogger(__name__)

AnyProgram = Union[ProgramSpec, BreakoutProgramSpec]

START_LAUNCH = (EventType.PROGRAM_STARTS, ConsequenceKind.LAUNCH_BALL)
GOAL_BOUNCE = (EventType.BALL_HITS_GOAL, ConsequenceKind.BOUNCE)


class EnvName(str, Enum):
    BOUNCE = "bounce"
    BREAKOUT = "breakout"


class SpeedPolicy(str, Enum):
    FIXED = "fixed"
    HOLDOUT_NORMAL = "holdout-normal"


class SpeedSuite(str, Enum):
    BOTH_HELD_OUT = "both-held-out"
    BALL_HELD_OUT = "ball-held-out"
    PADDLE_HELD_OUT = "paddle-held-out"
    NONE_HELD_OUT = "none-held-out"


@dataclass(frozen=True)
class Rubric:
    """Ordered error list; the order defines label indexing."""

    env: EnvName
    dimensions: Tuple

    def __post_init__(self):
        if not self.dimensions:
            raise PlayGraderConfigurationException("A rubric needs at least one error.")
        if len(set(self.dimensions)) != len(self.dimensions):
            raise PlayGraderConfigurationException("Rubric repeats an error.")
        if self.env == EnvName.BOUNCE:
            invalid = [d for d in self.dimensions if d not in ALL_CELLS]
        else:
            invalid = [d for d in self.dimensions if d not in BREAKOUT_ERRORS]
        if invalid:
            raise PlayGraderConfigurationException("Rubric holds invalid errors %s.", invalid)

    def __len__(self):
        return len(self.dimensions)

    @property
    def names(self) -> List[str]:
        if self.env == EnvName.BOUNCE:
            return [cell_name(cell) for cell in self.dimensions]
        return [error.name.lower() for error in self.dimensions]

    @property
    def closed_form_masking(self) -> bool:
        """Whether the rule-based masking is exact, i.e. the rubric lies within the default eight."""
        return self.env == EnvName.BOUNCE and set(self.dimensions) <= set(RUBRIC_8)

    @classmethod
    def parse(cls, text: str) -> "Rubric":
        """``8``, ``28``, ``breakout`` or a comma-separated list of error names."""
        text = str(text).strip()
        if text == "8":
            return cls(EnvName.BOUNCE, RUBRIC_8)
        if text == "28":
            return cls(EnvName.BOUNCE, ALL_CELLS)
        if text == "breakout":
            return cls(EnvName.BREAKOUT, BREAKOUT_ERRORS)
        names = [name.strip() for name in text.split(",") if name.strip()]
        try:
            if all(":" in name for name in names):
                return cls(EnvName.BOUNCE, tuple(parse_cell(name) for name in names))
            return cls(EnvName.BREAKOUT, tuple(BreakoutError[name.upper()] for name in names))
        except (KeyError, ValueError) as e:
            raise PlayGraderConfigurationException("Unknown rubric %s: %s", text, e) from e

    def to_text(self) -> str:
        return ",".join(self.names)


@dataclass(frozen=True)
class LabeledProgram:
    spec: AnyProgram
    label: Tuple[int, ...]
    toggles: Tuple[int, ...]
    seed: int

    @property
    def env(self) -> EnvName:
        return EnvName.BREAKOUT if isinstance(self.spec, BreakoutProgramSpec) else EnvName.BOUNCE

    def to_json(self) -> dict:
        return {
            "env": self.env.value,
            "spec": self.spec.to_json(),
            "label": list(self.label),
            "toggles": list(self.toggles),
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "LabeledProgram":
        env = EnvName(data.get("env", EnvName.BOUNCE.value))
        spec_type = BreakoutProgramSpec if env == EnvName.BREAKOUT else ProgramSpec
        label = tuple(int(bit) for bit in data["label"])
        return cls(spec_type.from_json(data["spec"]), label, tuple(int(b) for b in data.get("toggles", label)),
                   int(data.get("seed", 0)))


class CorpusConfig(BaseModel):
    model_config = ConfigDict(frozen=True, use_enum_values=False)

    rubric: str = "8"
    n: int = Field(1000, ge=1)
    p: float = Field(DEFAULT_TOGGLE_PROBABILITY, ge=0.0, le=1.0)
    speed_policy: SpeedPolicy = SpeedPolicy.FIXED
    seed: int = 0

    @field_validator("rubric")
    @classmethod
    def _known_rubric(cls, value):
        try:
            Rubric.parse(value)
        except PlayGraderConfigurationException as e:
            raise ValueError(str(e)) from e
        return value

    @classmethod
    def build(cls, **values) -> "CorpusConfig":
        try:
            return cls(**values)
        except ValidationError as e:
            raise PlayGraderConfigurationException("Invalid corpus config: %s", e) from e

    @property
    def parsed_rubric(self) -> Rubric:
        return Rubric.parse(self.rubric)


# -----masking-----

def mask_unobservable(toggles: Sequence[int], rubric: Rubric, program: Optional[ProgramSpec] = None) -> Tuple[int, ...]:
    """Zero the bits of errors another error makes impossible to witness.

    Rubrics inside the default eight use the closed-form rules; other bounce rubrics
    need ``program`` and ask the probes which cells can actually be seen.
    """
    bits = tuple(int(bool(bit)) for bit in toggles)
    if len(bits) != len(rubric):
        raise PlayGraderParamException("Got %s toggles for a rubric of %s errors.", len(bits), len(rubric))
    if rubric.env == EnvName.BREAKOUT:
        return bits
    if rubric.closed_form_masking:
        toggled = {cell for cell, bit in zip(rubric.dimensions, bits) if bit}
        label = []
        for cell, bit in zip(rubric.dimensions, bits):
            event, kind = cell
            if START_LAUNCH in toggled and event.is_ball_event:
                bit = 0
            if GOAL_BOUNCE in toggled and event == EventType.BALL_HITS_GOAL and kind != ConsequenceKind.BOUNCE:
                bit = 0
            label.append(bit)
        return tuple(label)
    if program is None:
        raise PlayGraderParamException("Masking a %s-error rubric needs the program to probe.", len(rubric))
    observed = observable_label(program, rubric.dimensions)
    return tuple(bit & seen for bit, seen in zip(bits, observed))


# -----sampling-----

def _draw_speeds(config: CorpusConfig, rng: np.random.Generator) -> Tuple[Speed, Speed]:
    if config.speed_policy == SpeedPolicy.FIXED:
        return Speed.NORMAL, Speed.NORMAL
    ball, paddle = rng.integers(0, len(TRAINING_SPEEDS), size=2)
    return TRAINING_SPEEDS[ball], TRAINING_SPEEDS[paddle]


def sample_program(config: CorpusConfig, rng: np.random.Generator, seed: int = 0) -> LabeledProgram:
    rubric = config.parsed_rubric
    toggles = tuple(int(bit) for bit in rng.random(len(rubric)) < config.p)
    ball_speed, paddle_speed = _draw_speeds(config, rng)

    if rubric.env == EnvName.BREAKOUT:
        errors = BreakoutError.NONE
        for error, bit in zip(rubric.dimensions, toggles):
            if bit:
                errors |= error
        rows = BREAKOUT_ROWS
        if BreakoutError.WRONG_ROW_COUNT in errors:
            choices = [r for r in range(1, BREAKOUT_MAX_ROWS + 1) if r != BREAKOUT_ROWS]
            rows = choices[int(rng.integers(0, len(choices)))]
        spec = BreakoutProgramSpec(errors, rows, ball_speed, paddle_speed)
        return LabeledProgram(spec, toggles, toggles, seed)

    deviations = frozenset(cell for cell, bit in zip(rubric.dimensions, toggles) if bit)
    spec = ProgramSpec(deviations, ball_speed, paddle_speed)
    return LabeledProgram(spec, mask_unobservable(toggles, rubric, spec), toggles, seed)


def generate(config: CorpusConfig) -> List[LabeledProgram]:
    """``config.n`` programs; program i draws from its own stream so shards reproduce exactly."""
    root = np.random.SeedSequence(config.seed)
    programs = []
    for i, child in enumerate(root.spawn(config.n)):
        programs.append(sample_program(config, np.random.default_rng(child), seed=config.seed * 1_000_003 + i))
    _LOGGER.info("Generated %s programs for rubric %s at p=%s", len(programs), config.rubric, config.p)
    return programs


# -----files-----

def write_dataset(programs: Iterable[LabeledProgram], path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            for program in programs:
                f.write(json.dumps(program.to_json(), sort_keys=True))
                f.write("\n")
    except OSError as e:
        raise PlayGraderIOException("Cannot write dataset %s: %s", path, e) from e


def read_dataset(path) -> List[LabeledProgram]:
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise PlayGraderIOException("Cannot read dataset %s: %s", path, e) from e

    programs = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            programs.append(LabeledProgram.from_json(json.loads(line)))
        except (ValueError, KeyError, TypeError, PlayGraderParamException) as e:
            raise PlayGraderParseException("Line %s of %s: malformed program: %s", number, path, e, line_number=number) from e
    return programs


# -----splits-----

def split(programs: Sequence[LabeledProgram], train_fraction: float,
          seed: int) -> Tuple[List[LabeledProgram], List[LabeledProgram]]:
    if not 0.0 < train_fraction < 1.0:
        raise PlayGraderConfigurationException("Train fraction %s outside (0, 1).", train_fraction)
    n_train = int(round(len(programs) * train_fraction))
    if n_train == 0 or n_train == len(programs):
        raise PlayGraderConfigurationException(
            "Fraction %s of %s programs leaves an empty split.", train_fraction, len(programs))
    order = np.random.default_rng(seed).permutation(len(programs))
    shuffled = [programs[i] for i in order]
    return shuffled[:n_train], shuffled[n_train:]


def speed_suite(programs: Sequence[LabeledProgram], suite: SpeedSuite, seed: int) -> List[LabeledProgram]:
    """Rewrite test-program speeds: held-out axes get the normal speed, the others a training speed."""
    rng = np.random.default_rng(seed)
    rewritten = []
    for program in programs:
        ball, paddle = (TRAINING_SPEEDS[i] for i in rng.integers(0, len(TRAINING_SPEEDS), size=2))
        if suite in (SpeedSuite.BOTH_HELD_OUT, SpeedSuite.BALL_HELD_OUT):
            ball = HELD_OUT_SPEED
        if suite in (SpeedSuite.BOTH_HELD_OUT, SpeedSuite.PADDLE_HELD_OUT):
            paddle = HELD_OUT_SPEED
        rewritten.append(LabeledProgram(program.spec.with_speeds(ball, paddle), program.label, program.toggles,
                                        program.seed))
    return rewritten


def program_hash(spec: AnyProgram) -> int:
    digest = hashlib.sha256(json.dumps(spec.to_json(), sort_keys=True).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def episode_seed(spec: AnyProgram, master_seed: int, episode: int) -> int:
    """Reproducible environment seed for grading episode ``episode`` of a program."""
    sequence = np.random.SeedSequence([program_hash(spec), master_seed, episode])
    return int(sequence.generate_state(1)[0])
