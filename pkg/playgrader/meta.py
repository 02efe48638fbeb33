"""Episodic task distribution: every program of a split is one task."""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import numpy as np

from playgrader.corpus import LabeledProgram
from playgrader.exceptions import PlayGraderConfigurationException, PlayGraderUsageException
from playgrader.registry import make_env

_LOGGER = logging.getLogger(__name__)


class ProgramSplit:
    def __init__(self, programs: Sequence[LabeledProgram], reveal_labels: bool):
        if not programs:
            raise PlayGraderConfigurationException("Split holds no programs.")
        self.programs = list(programs)
        self.reveal_labels = reveal_labels

    def __len__(self):
        return len(self.programs)

    @classmethod
    def train(cls, programs):
        return cls(programs, reveal_labels=True)

    @classmethod
    def test(cls, programs):
        return cls(programs, reveal_labels=False)


class MetaEpisode:
    """A sampled program with a fresh environment; test labels unlock only after a prediction."""

    def __init__(self, program: LabeledProgram, env, reveal_label: bool, seed: Optional[int] = None):
        self.program = program
        self.env = env
        self.seed = seed
        self._revealed = reveal_label
        self.prediction: Optional[Tuple[int, ...]] = None

    @property
    def spec(self):
        return self.program.spec

    @property
    def label(self) -> Tuple[int, ...]:
        if not self._revealed:
            raise PlayGraderUsageException("Test labels are hidden until a prediction is submitted.")
        return self.program.label

    def submit(self, prediction: Sequence[int]) -> Tuple[int, ...]:
        self.prediction = tuple(int(bit) for bit in prediction)
        self._revealed = True
        return self.program.label


def meta_reset(split: ProgramSplit, rng: np.random.Generator, seed: Optional[int] = None) -> MetaEpisode:
    program = split.programs[int(rng.integers(0, len(split)))]
    if seed is None:
        seed = int(rng.integers(0, 2 ** 31 - 1))
    env = make_env(program.spec)
    env.reset(seed=seed)
    return MetaEpisode(program, env, split.reveal_labels, seed)
