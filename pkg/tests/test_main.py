# pylint: disable=redefined-outer-name,unused-variable,expression-not-assigned

import csv
import json

import pytest

from playgrader.__main__ import build_parser, load_program, main
from playgrader.bounce import ProgramSpec
from playgrader.breakout import BreakoutProgramSpec
from playgrader.const import DEFAULT_TOGGLE_PROBABILITY
from playgrader.corpus import CorpusConfig, EnvName, generate, read_dataset, write_dataset
from playgrader.events import ConsequenceKind, EventType
from playgrader.exceptions import PlayGraderParamException
from playgrader.grader import emit_report, metrics_from_predictions
from playgrader.trainer import TrainConfig, build_loops

PAIR = "ball_hits_goal:bounce,paddle_moves:move_paddle"
REVERSED = ProgramSpec(frozenset({(EventType.PADDLE_MOVES, ConsequenceKind.MOVE_PADDLE)}))


@pytest.fixture
def program_file(tmp_path):
    path = tmp_path / "program.json"
    path.write_text(json.dumps(REVERSED.to_json()))
    return path


@pytest.fixture
def run_dir(tmp_path):
    run = tmp_path / "run"
    run.mkdir()
    config = TrainConfig.build(rubric=PAIR, mode="unfactorized")
    for loop in build_loops(config):
        loop.save(run)
    (run / "config.json").write_text(config.model_dump_json())
    return run


def describe_load_program():

    def it_reads_bare_specs(expect, program_file):
        expect(load_program(program_file)) == REVERSED

    def it_reads_corpus_records(expect, tmp_path):
        programs = generate(CorpusConfig.build(rubric="breakout", n=1, seed=3))
        (tmp_path / "record.json").write_text(json.dumps(programs[0].to_json()))
        expect(load_program(tmp_path / "record.json", EnvName.BREAKOUT)) == programs[0].spec

    def it_reads_breakout_specs(expect, tmp_path):
        (tmp_path / "breakout.json").write_text(json.dumps(BreakoutProgramSpec().to_json()))
        expect(load_program(tmp_path / "breakout.json", EnvName.BREAKOUT)) == BreakoutProgramSpec()

    def it_rejects_other_text(tmp_path):
        (tmp_path / "notes.txt").write_text("paddle goes left")
        with pytest.raises(PlayGraderParamException):
            load_program(tmp_path / "notes.txt")


def describe_main():

    def it_prints_its_version():
        with pytest.raises(SystemExit):
            main(["--version"])

    def it_generates_a_corpus(expect, tmp_path):
        expect(main(["gen-corpus", "--n", "5", "--seed", "2", "--out", str(tmp_path / "c.jsonl")])) == 0
        expect(len(read_dataset(tmp_path / "c.jsonl"))) == 5

    def it_fails_with_a_configuration_code(expect, tmp_path):
        expect(main(["gen-corpus", "--rubric", "nine", "--out", str(tmp_path / "c.jsonl")])) == 2

    def it_fails_with_an_io_code(expect, tmp_path):
        expect(main(["probe", "--program", str(tmp_path / "missing.json")])) == 3
        expect(main(["grade", "--checkpoints", str(tmp_path), "--program", str(tmp_path / "p.json")])) == 3

    def it_defaults_to_a_sparse_error_prior(expect):
        args = build_parser().parse_args(["gen-corpus", "--out", "corpus.jsonl"])
        expect(args.p) == DEFAULT_TOGGLE_PROBABILITY

    def it_rejects_a_malformed_report(expect, tmp_path):
        (tmp_path / "metrics.json").write_text("{}")
        argv = ["aggregate", "--runs", str(tmp_path), "--out", str(tmp_path / "agg.csv")]
        expect(main(argv)) == 2

    def it_probes_a_program(expect, program_file, capsys):
        expect(main(["probe", "--program", str(program_file), "--rubric", "8"])) == 0
        output = json.loads(capsys.readouterr().out)
        expect(output["deviations"]) == ["paddle_moves:move_paddle"]
        expect(len(output["observed"])) == 8

    def it_grades_a_program(expect, run_dir, program_file, capsys):
        expect(main(["grade", "--checkpoints", str(run_dir), "--program", str(program_file), "--seed", "1"])) == 0
        output = json.loads(capsys.readouterr().out)
        expect(len(output["label"])) == 2
        expect(output["rubric"]) == ["ball_hits_goal:bounce", "paddle_moves:move_paddle"]

    def it_evaluates_a_split(expect, run_dir, tmp_path):
        write_dataset(generate(CorpusConfig.build(rubric=PAIR, n=4, p=0.5, seed=6)), tmp_path / "c.jsonl")
        argv = ["eval", "--checkpoints", str(run_dir), "--corpus", str(tmp_path / "c.jsonl"), "--out",
                str(tmp_path / "report")]
        expect(main(argv)) == 0
        metrics = json.loads((tmp_path / "report" / "metrics.json").read_text())
        expect(metrics["programs"]) == 2
        expect(metrics["config"]["rubric"]) == PAIR

    def it_aggregates_reports(expect, tmp_path):
        for seed, prediction in enumerate([(1, 1), (0, 1)]):
            emit_report(metrics_from_predictions([(1, 0)], [prediction], ["a", "b"]), tmp_path / str(seed))
        argv = ["aggregate", "--runs", str(tmp_path / "0"), str(tmp_path / "1"), "--out", str(tmp_path / "agg.csv")]
        expect(main(argv)) == 0
        with open(tmp_path / "agg.csv") as f:
            rows = list(csv.DictReader(f))
        expect([row["name"] for row in rows]) == ["a", "b", "macro"]
        expect(float(rows[0]["accuracy_mean"])) == 0.5
