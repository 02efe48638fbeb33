#!/usr/bin/env python

"""Package entry point."""

import argparse
import json
import logging
import sys
from pathlib import Path

from playgrader import __version__
from playgrader.bounce import ProgramSpec
from playgrader.breakout import BreakoutProgramSpec
from playgrader.const import DEFAULT_TOGGLE_PROBABILITY, EXIT_CONFIGURATION, EXIT_IO, EXIT_OK
from playgrader.corpus import (
    CorpusConfig,
    EnvName,
    LabeledProgram,
    Rubric,
    SpeedSuite,
    generate,
    read_dataset,
    split,
    write_dataset,
)
from playgrader.events import cell_name
from playgrader.exceptions import PlayGraderException, PlayGraderIOException, PlayGraderParamException
from playgrader.grader import (
    GradingSystem,
    aggregate,
    emit_report,
    evaluate,
    evaluate_speed_suites,
    grade,
    parse_report,
    write_aggregate,
)
from playgrader.probes import observe_breakout, observe_cells
from playgrader.trainer import TrainConfig, TrainMode, train

_LOGGER = logging.getLogger(__name__)


def load_program(path, env: EnvName = EnvName.BOUNCE):
    """A program file holds either a corpus record or a bare program spec."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise PlayGraderIOException("Cannot read program %s: %s", path, e) from e
    except json.JSONDecodeError as e:
        raise PlayGraderParamException("Program %s is not JSON: %s", path, e) from e
    if "spec" in data:
        return LabeledProgram.from_json(data).spec
    if env == EnvName.BREAKOUT:
        return BreakoutProgramSpec.from_json(data)
    return ProgramSpec.from_json(data)


def gen_corpus(args):
    config = CorpusConfig.build(rubric=args.rubric, n=args.n, p=args.p, speed_policy=args.speed_policy,
                                seed=args.seed)
    write_dataset(generate(config), args.out)


def run_training(args):
    values = dict(mode=args.mode, env=args.env, corpus=args.corpus, steps=args.steps, seed=args.seed)
    if args.rubric is not None:
        values["rubric"] = args.rubric
    elif args.env == EnvName.BREAKOUT.value:
        values["rubric"] = "breakout"
    if args.workers is not None:
        values["workers"] = args.workers
    if args.eval_every is not None:
        values["eval_every"] = args.eval_every
    train(TrainConfig.build(**values), out_dir=args.out)


def run_grade(args):
    system = GradingSystem.load(args.checkpoints)
    prediction = grade(load_program(args.program, system.config.env), system, args.seed)
    output = dict(prediction.to_json(), rubric=system.rubric.names, seed=args.seed)
    print(json.dumps(output, indent=2))


def run_eval(args):
    system = GradingSystem.load(args.checkpoints)
    programs = read_dataset(args.corpus)
    train_programs, test_programs = split(programs, system.config.train_fraction, system.config.seed)
    programs = test_programs if args.split == "test" else train_programs
    config = json.loads(system.config.model_dump_json())
    seeds = {"master_seed": args.seed, "run_seed": system.config.seed}
    out = Path(args.out)
    if args.speed_suites:
        reports = evaluate_speed_suites(programs, system, args.seed, args.workers)
        for suite, report in reports.items():
            emit_report(report, out / suite.value, config=config, seeds=seeds)
        rows = [dict(suite=suite.value, **report.macro(), exact_match=report.exact_match)
                for suite, report in reports.items()]
        write_aggregate(rows, out / "speed_suites.csv")
    else:
        emit_report(evaluate(programs, system, args.seed, args.workers), out, config=config, seeds=seeds)


def run_probe(args):
    env = EnvName(args.env)
    program = load_program(args.program, env)
    if isinstance(program, BreakoutProgramSpec):
        found = {error.name.lower(): seen for error, seen in observe_breakout(program, seed=args.seed).items()}
    else:
        rubric = Rubric.parse(args.rubric)
        observations = observe_cells(program, rubric.dimensions, seed=args.seed)
        found = {cell_name(cell): o.deviates for cell, o in observations.items()}
    print(json.dumps({"deviations": [name for name, seen in found.items() if seen], "observed": found}, indent=2))


def run_aggregate(args):
    write_aggregate(aggregate([parse_report(run) for run in args.runs]), args.out)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="playgrader", description="Automatic feedback for interactive programs.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--verbose", "-v", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    corpus = commands.add_parser("gen-corpus", help="generate a labelled program corpus")
    corpus.add_argument("--rubric", default="8")
    corpus.add_argument("--n", type=int, default=1000)
    corpus.add_argument("--p", type=float, default=DEFAULT_TOGGLE_PROBABILITY)
    corpus.add_argument("--speed-policy", default="fixed", choices=["fixed", "holdout-normal"])
    corpus.add_argument("--seed", type=int, default=0)
    corpus.add_argument("--out", required=True)
    corpus.set_defaults(handler=gen_corpus)

    training = commands.add_parser("train", help="train exploration policies and feedback classifiers")
    training.add_argument("--mode", default=TrainMode.FACTORIZED.value, choices=[m.value for m in TrainMode])
    training.add_argument("--env", default=EnvName.BOUNCE.value, choices=[e.value for e in EnvName])
    training.add_argument("--rubric", default=None)
    training.add_argument("--corpus", required=True)
    training.add_argument("--steps", type=int, default=5_000_000)
    training.add_argument("--seed", type=int, default=0)
    training.add_argument("--eval-every", type=int, default=None)
    training.add_argument("--workers", type=int, default=None)
    training.add_argument("--out", required=True)
    training.set_defaults(handler=run_training)

    grading = commands.add_parser("grade", help="grade one program, printing a JSON prediction")
    grading.add_argument("--checkpoints", required=True)
    grading.add_argument("--program", required=True)
    grading.add_argument("--seed", type=int, default=0)
    grading.set_defaults(handler=run_grade)

    evaluation = commands.add_parser("eval", help="grade a corpus split and write metrics")
    evaluation.add_argument("--checkpoints", required=True)
    evaluation.add_argument("--corpus", required=True)
    evaluation.add_argument("--split", default="test", choices=["train", "test"])
    evaluation.add_argument("--seed", type=int, default=0)
    evaluation.add_argument("--workers", type=int, default=1)
    evaluation.add_argument("--speed-suites", action="store_true",
                            help=f"evaluate the {len(SpeedSuite)} held-out speed suites")
    evaluation.add_argument("--out", required=True)
    evaluation.set_defaults(handler=run_eval)

    probe = commands.add_parser("probe", help="print the deviations scripted probes observe in a program")
    probe.add_argument("--program", required=True)
    probe.add_argument("--env", default=EnvName.BOUNCE.value, choices=[e.value for e in EnvName])
    probe.add_argument("--rubric", default="28")
    probe.add_argument("--seed", type=int, default=0)
    probe.set_defaults(handler=run_probe)

    merge = commands.add_parser("aggregate", help="mean and standard deviation over per-seed reports")
    merge.add_argument("--runs", nargs="+", required=True)
    merge.add_argument("--out", required=True)
    merge.set_defaults(handler=run_aggregate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        args.handler(args)
    except PlayGraderIOException as e:
        _LOGGER.error("%s", e)
        return EXIT_IO
    except PlayGraderException as e:
        _LOGGER.error("%s", e)
        return EXIT_CONFIGURATION
    return EXIT_OK


if __name__ == '__main__':  # pragma: no cover
    sys.exit(main())
