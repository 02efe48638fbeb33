"""Grading new programs with trained checkpoints, plus metrics and reports."""
from __future__ import annotations

import asyncio
import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from playgrader.const import (
    CLASSIFIER_CHECKPOINT,
    CONFIG_FILE,
    CURVES_FILE,
    METRICS_CSV_FILE,
    METRICS_JSON_FILE,
    POLICY_CHECKPOINT,
)
from playgrader.corpus import LabeledProgram, SpeedSuite, episode_seed, speed_suite
from playgrader.exceptions import PlayGraderConfigurationException, PlayGraderIOException, PlayGraderParamException
from playgrader.networks import FeedbackClassifier, QActor, QNetwork, predict_bit
from playgrader.policy import act_epsilon_greedy
from playgrader.registry import env_name_of, make_env, observation_dim
from playgrader.trainer import TrainConfig, write_curves
from playgrader.trajectory import rollout

_LOGGER = logging.getLogger(__name__)

METRIC_COLUMNS = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class PredictedLabel:
    bits: Tuple[int, ...]
    confidences: Tuple[float, ...]  # g(y_k = 1 | τ_k)
    episode_lengths: Tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {"label": list(self.bits), "confidence": list(self.confidences)}


class GradingSystem:
    """K classifiers and the policies that gather their evidence; episode k uses policy min(k, n-1)."""

    def __init__(self, config: TrainConfig, policies: Sequence[QNetwork], classifiers: Sequence[FeedbackClassifier]):
        rubric = config.parsed_rubric
        if len(classifiers) != len(rubric):
            raise PlayGraderConfigurationException(
                "%s classifiers for a rubric of %s errors.", len(classifiers), len(rubric))
        if not policies:
            raise PlayGraderConfigurationException("A grading system needs at least one policy.")
        self.config = config
        self.rubric = rubric
        self.policies = list(policies)
        self.classifiers = list(classifiers)

    @classmethod
    def load(cls, checkpoint_dir) -> "GradingSystem":
        checkpoint_dir = Path(checkpoint_dir)
        config = TrainConfig.load(checkpoint_dir / CONFIG_FILE)
        obs_dim = observation_dim(config.env)
        policies = []
        for i in range(config.policy_count):
            network, header = QNetwork.from_checkpoint(checkpoint_dir / POLICY_CHECKPOINT.format(index=i))
            cls._check_header(header, config, obs_dim)
            policies.append(network)
        classifiers = []
        for k in range(len(config.parsed_rubric)):
            network, header = FeedbackClassifier.from_checkpoint(checkpoint_dir / CLASSIFIER_CHECKPOINT.format(index=k))
            cls._check_header(header, config, obs_dim)
            classifiers.append(network)
        _LOGGER.info("Loaded %s policies and %s classifiers from %s", len(policies), len(classifiers), checkpoint_dir)
        return cls(config, policies, classifiers)

    @staticmethod
    def _check_header(header: dict, config: TrainConfig, obs_dim: int):
        if header.get("rubric") != config.rubric or header.get("obs_dim") != obs_dim:
            raise PlayGraderConfigurationException(
                "Checkpoint for rubric %s (width %s) does not match run rubric %s (width %s).",
                header.get("rubric"), header.get("obs_dim"), config.rubric, obs_dim)

    def policy_for(self, k: int) -> QNetwork:
        return self.policies[min(k, len(self.policies) - 1)]


def grade(program, system: GradingSystem, master_seed: int = 0) -> PredictedLabel:
    """Exactly one greedy episode per rubric error, each read by that error's classifier."""
    if env_name_of(program) != system.config.env:
        raise PlayGraderConfigurationException(
            "Checkpoints grade %s programs, got a %s program.", system.config.env.value, env_name_of(program).value)
    rng = np.random.default_rng(master_seed)
    bits, confidences, lengths = [], [], []
    for k, classifier in enumerate(system.classifiers):
        actor = QActor(system.policy_for(k), 0.0, rng, act_epsilon_greedy)
        trajectory = rollout(make_env(program), episode_seed(program, master_seed, k), actor)
        distribution = classifier.classify(trajectory)
        bits.append(predict_bit(distribution))
        confidences.append(float(distribution[1]))
        lengths.append(len(trajectory))
    return PredictedLabel(tuple(bits), tuple(confidences), tuple(lengths))


# -----metrics-----

@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def add(self, label: int, prediction: int):
        if label and prediction:
            self.tp += 1
        elif prediction:
            self.fp += 1
        elif label:
            self.fn += 1
        else:
            self.tn += 1

    def merge(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def _no_positives(self) -> bool:
        return self.tp + self.fp + self.fn == 0

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 1.0

    @property
    def precision(self) -> float:
        if self.tp + self.fp == 0:
            return 1.0 if self._no_positives else 0.0
        return self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        if self.tp + self.fn == 0:
            return 1.0 if self._no_positives else 0.0
        return self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        precision, recall = self.precision, self.recall
        if precision + recall == 0:
            return 1.0 if self._no_positives else 0.0
        return 2 * precision * recall / (precision + recall)

    def metrics(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_COLUMNS}


@dataclass
class MetricsReport:
    names: List[str]
    counts: List[ConfusionCounts]
    exact_match: float
    any_error_accuracy: float
    grading_seconds: float = 0.0  # mean wall-clock per program
    programs: int = 0
    extra: dict = field(default_factory=dict)

    def per_dimension(self) -> List[Dict[str, float]]:
        return [c.metrics() for c in self.counts]

    def macro(self) -> Dict[str, float]:
        return {name: float(np.mean([getattr(c, name) for c in self.counts])) for name in METRIC_COLUMNS}

    def to_json(self) -> dict:
        return {
            "dimensions": [
                dict(name=name, **asdict(counts), **counts.metrics()) for name, counts in zip(self.names, self.counts)
            ],
            "macro": self.macro(),
            "exact_match": self.exact_match,
            "any_error_accuracy": self.any_error_accuracy,
            "grading_seconds": self.grading_seconds,
            "programs": self.programs,
            **self.extra,
        }

    @classmethod
    def from_json(cls, data: dict) -> "MetricsReport":
        known = {"dimensions", "macro", "exact_match", "any_error_accuracy", "grading_seconds", "programs"}
        dimensions = data["dimensions"]
        return cls(
            [d["name"] for d in dimensions],
            [ConfusionCounts(d["tp"], d["fp"], d["tn"], d["fn"]) for d in dimensions],
            data["exact_match"],
            data["any_error_accuracy"],
            data.get("grading_seconds", 0.0),
            data.get("programs", 0),
            {key: value for key, value in data.items() if key not in known},
        )

    def rows(self) -> List[dict]:
        rows = [dict(name=name, **counts.metrics(), **asdict(counts)) for name, counts in zip(self.names, self.counts)]
        rows.append(dict(name="macro", **self.macro(), tp="", fp="", tn="", fn=""))
        return rows


def metrics_from_predictions(labels: Sequence[Sequence[int]], predictions: Sequence[Sequence[int]],
                             names: Sequence[str]) -> MetricsReport:
    counts = [ConfusionCounts() for _ in names]
    exact = coarse = 0
    for label, prediction in zip(labels, predictions):
        for k, counter in enumerate(counts):
            counter.add(int(label[k]), int(prediction[k]))
        exact += tuple(map(int, label)) == tuple(map(int, prediction))
        coarse += any(label) == any(prediction)
    n = len(labels)
    return MetricsReport(list(names), counts, exact / n if n else 1.0, coarse / n if n else 1.0, programs=n)


def _grade_shard(programs: Sequence[LabeledProgram], system: GradingSystem, master_seed: int):
    predictions, seconds = [], 0.0
    for program in programs:
        started = time.perf_counter()
        predictions.append(grade(program.spec, system, master_seed).bits)
        seconds += time.perf_counter() - started
    return predictions, seconds


async def evaluate_async(programs: Sequence[LabeledProgram], system: GradingSystem, master_seed: int = 0,
                         workers: int = 1) -> MetricsReport:
    if not programs:
        raise PlayGraderConfigurationException("Cannot evaluate an empty split.")
    shards = [programs[i::workers] for i in range(workers) if programs[i::workers]]
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=len(shards)) as pool:
        results = await asyncio.gather(*(
            loop.run_in_executor(pool, _grade_shard, shard, system, master_seed) for shard in shards))

    labels, predictions, seconds = [], [], 0.0
    for shard, (shard_predictions, shard_seconds) in zip(shards, results):
        labels.extend(program.label for program in shard)
        predictions.extend(shard_predictions)
        seconds += shard_seconds
    report = metrics_from_predictions(labels, predictions, system.rubric.names)
    report.grading_seconds = seconds / len(programs)
    _LOGGER.info("Evaluated %s programs: macro accuracy %.4f", len(programs), report.macro()["accuracy"])
    return report


def evaluate(programs: Sequence[LabeledProgram], system: GradingSystem, master_seed: int = 0,
             workers: int = 1) -> MetricsReport:
    return asyncio.run(evaluate_async(programs, system, master_seed, workers))


def evaluate_speed_suites(programs: Sequence[LabeledProgram], system: GradingSystem, master_seed: int = 0,
                          workers: int = 1) -> Dict[SpeedSuite, MetricsReport]:
    reports = {}
    for suite in SpeedSuite:
        report = evaluate(speed_suite(programs, suite, master_seed), system, master_seed, workers)
        report.extra["suite"] = suite.value
        reports[suite] = report
    return reports


# -----reports-----

def emit_report(report: MetricsReport, out_dir, curves: Optional[Sequence[dict]] = None,
                config: Optional[dict] = None, seeds: Optional[dict] = None):
    out_dir = Path(out_dir)
    document = dict(report.to_json(), config=config or {}, seeds=seeds or {})
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / METRICS_JSON_FILE).write_text(json.dumps(document, indent=2, sort_keys=True))
        _write_rows(out_dir / METRICS_CSV_FILE, report.rows())
    except OSError as e:
        raise PlayGraderIOException("Cannot write report to %s: %s", out_dir, e) from e
    if curves:
        write_curves(curves, out_dir / CURVES_FILE)
    _LOGGER.info("Wrote report to %s", out_dir)


def _write_rows(path: Path, rows: Sequence[dict]):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def parse_report(path) -> MetricsReport:
    path = Path(path)
    if path.is_dir():
        path = path / METRICS_JSON_FILE
    try:
        data = json.loads(path.read_text())
    except OSError as e:
        raise PlayGraderIOException("Cannot read report %s: %s", path, e) from e
    except json.JSONDecodeError as e:
        raise PlayGraderParamException("Report %s is not JSON: %s", path, e) from e
    try:
        data.pop("config", None)
        data.pop("seeds", None)
        return MetricsReport.from_json(data)
    except (AttributeError, KeyError, TypeError) as e:
        raise PlayGraderParamException("Report %s is malformed: %r", path, e) from e


def aggregate(reports: Sequence[MetricsReport]) -> List[dict]:
    """Mean and sample standard deviation over seeds, per dimension and for the macro row."""
    if not reports:
        raise PlayGraderConfigurationException("Nothing to aggregate.")
    names = reports[0].names
    if any(r.names != names for r in reports):
        raise PlayGraderConfigurationException("Reports cover different rubrics.")

    def summary(name: str, values_per_report: List[Dict[str, float]]) -> dict:
        row = {"name": name}
        for metric in METRIC_COLUMNS:
            values = np.array([v[metric] for v in values_per_report])
            row[f"{metric}_mean"] = float(values.mean())
            row[f"{metric}_std"] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        return row

    rows = [summary(name, [r.per_dimension()[k] for r in reports]) for k, name in enumerate(names)]
    rows.append(summary("macro", [r.macro() for r in reports]))
    return rows


def write_aggregate(rows: Sequence[dict], path):
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        _write_rows(Path(path), rows)
    except OSError as e:
        raise PlayGraderIOException("Cannot write aggregate %s: %s", path, e) from e


def format_mean_std(mean: float, std: float) -> str:
    if math.isnan(std):
        return f"{100 * mean:.1f}"
    return f"{100 * mean:.1f} ± {100 * std:.1f}"
