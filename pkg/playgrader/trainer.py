"""Training: information-gain rewards, the per-episode update routine and the run coordinator.

Factorized runs train one (policy, classifier) pair per rubric error, each rewarded
only by its own label bit. Unfactorized runs train a single policy on the summed
rewards of all classifiers, and direct-max runs reward a single policy with the
fraction of bits the classifiers get right at the end of the episode.
"""
from __future__ import annotations

import asyncio
import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from playgrader.const import (
    BATCH_SIZE,
    CLASSIFIER_CHECKPOINT,
    CONFIG_FILE,
    CURVES_FILE,
    DISCOUNT,
    EPSILON_END,
    EPSILON_HORIZON,
    EPSILON_START,
    FORGET_BIAS,
    LEARNING_RATE,
    MIN_BUFFER_EPISODES,
    POLICY_CHECKPOINT,
    REPLAY_CAPACITY,
    TARGET_SYNC_UPDATES,
    TRAINING_LOG_FILE,
    UPDATE_EVERY_STEPS,
)
from playgrader.corpus import EnvName, LabeledProgram, Rubric, episode_seed, read_dataset, split
from playgrader.exceptions import PlayGraderConfigurationException, PlayGraderIOException
from playgrader.meta import MetaEpisode, ProgramSplit, meta_reset
from playgrader.networks import FeedbackClassifier, predict_bit
from playgrader.policy import EpsilonSchedule, ExplorationPolicy, StoredEpisode, TrainingLog
from playgrader.registry import make_env, observation_dim
from playgrader.trajectory import Trajectory, rollout

_LOGGER = logging.getLogger(__name__)


class TrainMode(str, Enum):
    FACTORIZED = "factorized"
    UNFACTORIZED = "unfactorized"
    DIRECT_MAX = "direct-max"


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: TrainMode = TrainMode.FACTORIZED
    env: EnvName = EnvName.BOUNCE
    rubric: str = "8"
    corpus: Optional[str] = None
    steps: int = Field(5_000_000, ge=1)
    seed: int = 0
    train_fraction: float = Field(0.5, gt=0.0, lt=1.0)

    learning_rate: float = Field(LEARNING_RATE, ge=0.0)
    batch_size: int = Field(BATCH_SIZE, ge=1)
    discount: float = Field(DISCOUNT, ge=0.0, le=1.0)
    min_buffer_episodes: int = Field(MIN_BUFFER_EPISODES, ge=1)
    target_sync_updates: int = Field(TARGET_SYNC_UPDATES, ge=1)
    update_every_steps: int = Field(UPDATE_EVERY_STEPS, ge=1)
    replay_capacity: int = Field(REPLAY_CAPACITY, ge=1)
    epsilon_start: float = Field(EPSILON_START, ge=0.0, le=1.0)
    epsilon_end: float = Field(EPSILON_END, ge=0.0, le=1.0)
    epsilon_horizon: int = Field(EPSILON_HORIZON, ge=1)

    eval_every: int = Field(50_000, ge=1)
    eval_programs: int = Field(100, ge=1)
    workers: Optional[int] = Field(None, ge=1)

    forget_bias: float = FORGET_BIAS
    td_loss: str = Field("mse", pattern="^(mse|huber)$")
    recompute_rewards: bool = False
    dtype: str = Field("float64", pattern="^(float64|float32)$")
    classifier_supervision: str = Field("final", pattern="^(final|all-prefixes)$")

    @model_validator(mode="after")
    def _rubric_matches_env(self):
        try:
            rubric = Rubric.parse(self.rubric)
        except PlayGraderConfigurationException as e:
            raise ValueError(str(e)) from e
        if rubric.env != self.env:
            raise ValueError(f"rubric {self.rubric} belongs to {rubric.env.value}, not {self.env.value}")
        if self.epsilon_end > self.epsilon_start:
            raise ValueError("epsilon_end exceeds epsilon_start")
        return self

    @classmethod
    def build(cls, **values) -> "TrainConfig":
        try:
            return cls(**values)
        except ValidationError as e:
            raise PlayGraderConfigurationException("Invalid training config: %s", e) from e

    @classmethod
    def load(cls, path) -> "TrainConfig":
        try:
            return cls.model_validate_json(Path(path).read_text())
        except OSError as e:
            raise PlayGraderIOException("Cannot read config %s: %s", path, e) from e
        except ValidationError as e:
            raise PlayGraderConfigurationException("Invalid config %s: %s", path, e) from e

    @property
    def parsed_rubric(self) -> Rubric:
        return Rubric.parse(self.rubric)

    @property
    def epsilon_schedule(self) -> EpsilonSchedule:
        return EpsilonSchedule(self.epsilon_start, self.epsilon_end, self.epsilon_horizon)

    @property
    def policy_count(self) -> int:
        return len(self.parsed_rubric) if self.mode == TrainMode.FACTORIZED else 1

    def overrides(self) -> dict:
        defaults = TrainConfig(env=self.env, rubric=self.rubric)
        return {name: value for name, value in self.model_dump().items() if value != getattr(defaults, name)}


# -----rewards-----

def compute_exploration_rewards(classifier: FeedbackClassifier, trajectory: Trajectory, bit: int) -> np.ndarray:
    """r_t = log g(bit | τ_{:t+1}) − log g(bit | τ_{:t}) for t = 0 … T−1."""
    log_probs = classifier.log_prob_prefixes(trajectory)[:, int(bit)]
    return np.diff(log_probs)


def compute_direct_max_reward(classifiers: Sequence[FeedbackClassifier], trajectory: Trajectory,
                              label: Sequence[int]) -> np.ndarray:
    """Zero everywhere except the last step, which pays the fraction of bits predicted right."""
    rewards = np.zeros(len(trajectory))
    correct = [predict_bit(c.classify(trajectory)) == int(bit) for c, bit in zip(classifiers, label)]
    rewards[-1] = float(np.mean(correct))
    return rewards


# -----one training loop-----

@dataclass
class EpisodeStats:
    steps: int
    mean_reward: float
    td_losses: List[float] = field(default_factory=list)
    classifier_losses: List[float] = field(default_factory=list)


@dataclass
class CurveRow:
    step: int
    accuracies: Dict[int, float]
    mean_reward: float
    epsilon: float
    td_loss: float
    classifier_loss: float


def _mean(values) -> float:
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else math.nan


class TrainingLoop:
    """One exploration policy with the classifiers that reward it."""

    def __init__(self, config: TrainConfig, index: int, dimensions: Sequence[int],
                 seed_sequence: np.random.SeedSequence):
        self.config = config
        self.index = index
        self.dimensions = list(dimensions)
        obs_dim = observation_dim(config.env)
        policy_seq, rollout_seq, sample_seq, *classifier_seqs = seed_sequence.spawn(3 + len(self.dimensions))
        self.policy = ExplorationPolicy(
            obs_dim, _int_seed(policy_seq), config.dtype, config.forget_bias, config.replay_capacity,
            config.min_buffer_episodes, config.target_sync_updates)
        self.classifiers = {
            k: FeedbackClassifier(obs_dim, _int_seed(seq), config.dtype, config.forget_bias)
            for k, seq in zip(self.dimensions, classifier_seqs)
        }
        self.rollout_rng = np.random.default_rng(rollout_seq)
        self.sample_rng = np.random.default_rng(sample_seq)
        self.schedule = config.epsilon_schedule
        self.steps = 0
        self.episodes = 0
        self.gated_steps = 0
        self.log: Optional[TrainingLog] = None

    def exploration_rewards(self, trajectory: Trajectory, label: Sequence[int]) -> np.ndarray:
        if self.config.mode == TrainMode.DIRECT_MAX:
            return compute_direct_max_reward([self.classifiers[k] for k in self.dimensions], trajectory,
                                             [label[k] for k in self.dimensions])
        rewards = np.zeros(len(trajectory))
        for k in self.dimensions:
            rewards = rewards + compute_exploration_rewards(self.classifiers[k], trajectory, label[k])
        return rewards

    def _recompute(self, episode: StoredEpisode) -> np.ndarray:
        return self.exploration_rewards(episode.trajectory, episode.label)

    def run_training_episode(self, episode: MetaEpisode) -> EpisodeStats:
        config = self.config
        epsilon = self.schedule(self.steps)
        label = episode.label
        trajectory = rollout(episode.env, episode.seed, self.policy.actor(epsilon, self.rollout_rng))

        rewards = self.exploration_rewards(trajectory, label)
        self.policy.buffer.insert(StoredEpisode(trajectory, rewards, tuple(label)))
        stats = EpisodeStats(len(trajectory), float(np.mean(rewards)) if len(rewards) else 0.0)

        for _ in range(len(trajectory)):
            self.steps += 1
            if not self.policy.buffer.ready:
                continue
            if self.gated_steps == 0:
                _LOGGER.info("Loop %s: replay gate open after %s episodes", self.index, len(self.policy.buffer))
            self.gated_steps += 1
            if self.gated_steps % config.update_every_steps == 0:
                stats.td_losses.append(self.policy.update(
                    self.sample_rng, config.batch_size, config.learning_rate, config.discount, config.td_loss,
                    self._recompute if config.recompute_rewards else None))

        all_prefixes = config.classifier_supervision == "all-prefixes"
        for k in self.dimensions:
            stats.classifier_losses.append(
                self.classifiers[k].update(trajectory, label[k], config.learning_rate, all_prefixes))
        self.episodes += 1

        if self.log is not None:
            self.log.append(self.steps, _mean(stats.td_losses), epsilon, stats.mean_reward)
        _LOGGER.debug("Loop %s episode %s: %s steps, reward %.4f", self.index, self.episodes, stats.steps,
                      stats.mean_reward)
        return stats

    def evaluate(self, programs: Sequence[LabeledProgram]) -> Dict[int, float]:
        """Accuracy per dimension with greedy rollouts."""
        correct = {k: 0 for k in self.dimensions}
        rng = np.random.default_rng(0)
        for program in programs:
            seed = episode_seed(program.spec, self.config.seed, self.index)
            trajectory = rollout(make_env(program.spec), seed, self.policy.actor(0.0, rng))
            for k in self.dimensions:
                correct[k] += predict_bit(self.classifiers[k].classify(trajectory)) == program.label[k]
        return {k: correct[k] / len(programs) for k in self.dimensions}

    def run(self, train_programs: Sequence[LabeledProgram], eval_programs: Sequence[LabeledProgram],
            out_dir: Optional[Path] = None) -> List[CurveRow]:
        config = self.config
        if out_dir is not None:
            self.log = TrainingLog(out_dir / TRAINING_LOG_FILE.format(index=self.index))
        rows = []
        next_eval = config.eval_every
        window: List[EpisodeStats] = []
        tasks = ProgramSplit.train(train_programs)
        while self.steps < config.steps:
            episode = meta_reset(tasks, self.sample_rng, seed=int(self.rollout_rng.integers(0, 2 ** 31 - 1)))
            window.append(self.run_training_episode(episode))
            while self.steps >= next_eval and next_eval <= config.steps:
                rows.append(CurveRow(
                    next_eval,
                    self.evaluate(eval_programs),
                    _mean([s.mean_reward for s in window]),
                    self.schedule(next_eval),
                    _mean([loss for s in window for loss in s.td_losses]),
                    _mean([loss for s in window for loss in s.classifier_losses]),
                ))
                _LOGGER.info("Loop %s at step %s: accuracy %s", self.index, next_eval, rows[-1].accuracies)
                window = []
                next_eval += config.eval_every
        if out_dir is not None:
            self.save(out_dir)
        return rows

    def save(self, out_dir: Path):
        extra = {"rubric": self.config.rubric, "env": self.config.env.value, "mode": self.config.mode.value,
                 "run_seed": self.config.seed}
        self.policy.online.save(out_dir / POLICY_CHECKPOINT.format(index=self.index), dimensions=self.dimensions,
                                **extra)
        for k, classifier in self.classifiers.items():
            classifier.save(out_dir / CLASSIFIER_CHECKPOINT.format(index=k), dimension=k, **extra)


def _int_seed(sequence: np.random.SeedSequence) -> int:
    return int(sequence.generate_state(1)[0])


# -----run coordinator-----

@dataclass
class RunArtifacts:
    out_dir: Optional[Path]
    curves: List[dict]
    loops: List[TrainingLoop]


def build_loops(config: TrainConfig) -> List[TrainingLoop]:
    rubric = config.parsed_rubric
    if config.mode == TrainMode.FACTORIZED:
        assignments = [[k] for k in range(len(rubric))]
    else:
        assignments = [list(range(len(rubric)))]
    sequences = np.random.SeedSequence(config.seed).spawn(len(assignments))
    return [TrainingLoop(config, i, dims, seq) for i, (dims, seq) in enumerate(zip(assignments, sequences))]


def merge_curves(per_loop: Sequence[Sequence[CurveRow]], rubric: Rubric) -> List[dict]:
    """One row per nominal evaluation step, dimensions gathered from whichever loop owns them."""
    by_step: Dict[int, List[CurveRow]] = {}
    for rows in per_loop:
        for row in rows:
            by_step.setdefault(row.step, []).append(row)
    merged = []
    for step in sorted(by_step):
        rows = by_step[step]
        accuracies = {}
        for row in rows:
            accuracies.update(row.accuracies)
        entry = {"step": step}
        for k, name in enumerate(rubric.names):
            entry[f"accuracy[{name}]"] = accuracies.get(k, math.nan)
        entry["mean_accuracy"] = _mean(list(accuracies.values()))
        entry["mean_exploration_reward"] = _mean([r.mean_reward for r in rows])
        entry["epsilon"] = _mean([r.epsilon for r in rows])
        entry["td_loss"] = _mean([r.td_loss for r in rows])
        entry["classifier_loss"] = _mean([r.classifier_loss for r in rows])
        merged.append(entry)
    return merged


def write_curves(rows: Sequence[dict], path, columns: Optional[Sequence[str]] = None):
    path = Path(path)
    columns = list(columns or (rows[0].keys() if rows else ["step"]))
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(columns)
            for row in rows:
                writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])
    except OSError as e:
        raise PlayGraderIOException("Cannot write curves %s: %s", path, e) from e


def _check_programs(programs: Sequence[LabeledProgram], config: TrainConfig):
    rubric = config.parsed_rubric
    for program in programs:
        if program.env != config.env or len(program.label) != len(rubric):
            raise PlayGraderConfigurationException(
                "Corpus program (%s, %s labels) does not fit rubric %s on %s.",
                program.env.value, len(program.label), config.rubric, config.env.value)


async def train_async(config: TrainConfig, programs: Optional[Sequence[LabeledProgram]] = None,
                      out_dir=None) -> RunArtifacts:
    if programs is None:
        if config.corpus is None:
            raise PlayGraderConfigurationException("Training needs a corpus.")
        programs = read_dataset(config.corpus)
    _check_programs(programs, config)
    train_programs, test_programs = split(programs, config.train_fraction, config.seed)
    eval_programs = test_programs[:config.eval_programs]

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / CONFIG_FILE).write_text(config.model_dump_json(indent=2))
        except OSError as e:
            raise PlayGraderIOException("Cannot write run directory %s: %s", out_dir, e) from e
    _LOGGER.info("Training %s on %s programs (%s held out), overrides %s", config.mode.value,
                 len(train_programs), len(eval_programs), config.overrides())

    loops = build_loops(config)
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=config.workers or len(loops)) as pool:
        per_loop = await asyncio.gather(*(
            loop.run_in_executor(pool, training_loop.run, train_programs, eval_programs, out_dir)
            for training_loop in loops
        ))

    curves = merge_curves(per_loop, config.parsed_rubric)
    if out_dir is not None:
        write_curves(curves, out_dir / CURVES_FILE, curve_columns(config.parsed_rubric))
        _LOGGER.info("Wrote %s curve rows and %s policies to %s", len(curves), len(loops), out_dir)
    return RunArtifacts(out_dir, curves, loops)


def curve_columns(rubric: Rubric) -> List[str]:
    return (["step"] + [f"accuracy[{name}]" for name in rubric.names]
            + ["mean_accuracy", "mean_exploration_reward", "epsilon", "td_loss", "classifier_loss"])


def train(config: TrainConfig, programs: Optional[Sequence[LabeledProgram]] = None, out_dir=None) -> RunArtifacts:
    return asyncio.run(train_async(config, programs, out_dir))
