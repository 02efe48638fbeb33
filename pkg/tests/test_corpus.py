# pylint: disable=redefined-outer-name,unused-variable,expression-not-assigned

import numpy as np
import pytest

from playgrader.bounce import ProgramSpec
from playgrader.breakout import BreakoutProgramSpec
from playgrader.const import RUBRIC_8
from playgrader.corpus import (
    CorpusConfig,
    EnvName,
    Rubric,
    SpeedSuite,
    episode_seed,
    generate,
    mask_unobservable,
    read_dataset,
    speed_suite,
    split,
    write_dataset,
)
from playgrader.events import BreakoutError, Speed
from playgrader.exceptions import (
    PlayGraderConfigurationException,
    PlayGraderIOException,
    PlayGraderParamException,
    PlayGraderParseException,
)
from playgrader.probes import observable_label

EIGHT = Rubric.parse("8")


@pytest.fixture
def corpus():
    return generate(CorpusConfig.build(rubric="8", n=40, p=0.5, seed=5))


def describe_rubric():

    def it_parses_the_named_rubrics(expect):
        expect(len(Rubric.parse("8"))) == 8
        expect(len(Rubric.parse("28"))) == 28
        expect(Rubric.parse("breakout").env) == EnvName.BREAKOUT

    def it_parses_error_lists(expect):
        rubric = Rubric.parse("ball_hits_goal:bounce, paddle_moves:move_paddle")
        expect(rubric.dimensions) == (RUBRIC_8[0], RUBRIC_8[5])
        expect(Rubric.parse(rubric.to_text())) == rubric

    def it_rejects_unknown_errors():
        with pytest.raises(PlayGraderConfigurationException):
            Rubric.parse("ball_hits_moon:bounce")

    def it_rejects_repeated_errors():
        with pytest.raises(PlayGraderConfigurationException):
            Rubric.parse("ball_hits_goal:bounce,ball_hits_goal:bounce")


def describe_mask_unobservable():

    def it_hides_ball_errors_when_nothing_launches(expect):
        expect(mask_unobservable((1, 1, 1, 1, 1, 1, 1, 1), EIGHT)) == (0, 0, 0, 0, 0, 1, 0, 1)

    def it_hides_goal_consequences_behind_a_goal_bounce(expect):
        expect(mask_unobservable((1, 1, 1, 0, 1, 0, 0, 0), EIGHT)) == (1, 0, 0, 0, 1, 0, 0, 0)

    def it_leaves_independent_errors_alone(expect):
        expect(mask_unobservable((0, 1, 1, 1, 1, 1, 1, 0), EIGHT)) == (0, 1, 1, 1, 1, 1, 1, 0)

    def it_agrees_with_what_play_reveals(expect):
        for program in generate(CorpusConfig.build(rubric="8", n=150, p=0.5, seed=0)):
            expect(observable_label(program.spec, RUBRIC_8)) == program.label

    def it_needs_the_program_outside_the_default_rubric():
        with pytest.raises(PlayGraderParamException):
            mask_unobservable((0,) * 28, Rubric.parse("28"))

    def it_rejects_the_wrong_length():
        with pytest.raises(PlayGraderParamException):
            mask_unobservable((1, 0), EIGHT)


def describe_generate():

    def it_is_deterministic(expect):
        config = CorpusConfig.build(rubric="8", n=20, p=0.5, seed=9)
        expect(generate(config)) == generate(config)

    def it_toggles_at_the_requested_rate(expect):
        programs = generate(CorpusConfig.build(rubric="8", n=2000, p=0.12, seed=1))
        rate = np.mean([program.toggles for program in programs])
        expect(abs(rate - 0.12)) < 0.02

    def it_never_labels_an_untoggled_error(expect, corpus):
        for program in corpus:
            expect(all(label <= toggle for label, toggle in zip(program.label, program.toggles))) == True

    def it_draws_training_speeds_when_holding_out(expect):
        programs = generate(CorpusConfig.build(rubric="8", n=50, p=0.0, speed_policy="holdout-normal", seed=2))
        expect(any(p.spec.ball_speed == Speed.NORMAL for p in programs)) == False

    def it_draws_other_row_counts_for_breakout(expect):
        programs = generate(CorpusConfig.build(rubric="breakout", n=60, p=0.5, seed=4))
        wrong = [p.spec for p in programs if p.spec.has(BreakoutError.WRONG_ROW_COUNT)]
        expect(bool(wrong)) == True
        expect(all(spec.rows != 10 for spec in wrong)) == True
        expect(all(isinstance(p.spec, BreakoutProgramSpec) for p in programs)) == True

    def it_validates_its_config():
        with pytest.raises(PlayGraderConfigurationException):
            CorpusConfig.build(rubric="8", n=0)
        with pytest.raises(PlayGraderConfigurationException):
            CorpusConfig.build(rubric="nine")


def describe_datasets():

    def it_round_trips_through_jsonl(expect, tmp_path, corpus):
        write_dataset(corpus, tmp_path / "corpus.jsonl")
        expect(read_dataset(tmp_path / "corpus.jsonl")) == corpus

    def it_reports_the_malformed_line(expect, tmp_path, corpus):
        path = tmp_path / "corpus.jsonl"
        write_dataset(corpus[:2], path)
        with open(path, "a") as f:
            f.write("{not json\n")
        with pytest.raises(PlayGraderParseException) as excinfo:
            read_dataset(path)
        expect(excinfo.value.line_number) == 3

    def it_reports_missing_files(tmp_path):
        with pytest.raises(PlayGraderIOException):
            read_dataset(tmp_path / "missing.jsonl")


def describe_split():

    def it_partitions_the_corpus(expect, corpus):
        train, test = split(corpus, 0.5, 0)
        expect(len(train)) == 20
        expect(sorted(p.seed for p in train + test)) == sorted(p.seed for p in corpus)

    def it_refuses_empty_splits(corpus):
        with pytest.raises(PlayGraderConfigurationException):
            split(corpus[:1], 0.5, 0)


def describe_speed_suite():

    def it_holds_out_the_normal_speed(expect, corpus):
        for program in speed_suite(corpus, SpeedSuite.BOTH_HELD_OUT, 0):
            expect((program.spec.ball_speed, program.spec.paddle_speed)) == (Speed.NORMAL, Speed.NORMAL)
        for program in speed_suite(corpus, SpeedSuite.NONE_HELD_OUT, 0):
            expect(Speed.NORMAL in (program.spec.ball_speed, program.spec.paddle_speed)) == False

    def it_keeps_the_labels(expect, corpus):
        rewritten = speed_suite(corpus, SpeedSuite.BALL_HELD_OUT, 0)
        expect([p.label for p in rewritten]) == [p.label for p in corpus]


def describe_episode_seed():

    def it_depends_on_program_seed_and_episode(expect):
        program = ProgramSpec()
        other = ProgramSpec(ball_speed=Speed.FAST)
        seeds = {episode_seed(program, 0, 0), episode_seed(program, 1, 0), episode_seed(program, 0, 1),
                 episode_seed(other, 0, 0)}
        expect(len(seeds)) == 4
        expect(episode_seed(program, 0, 0)) == episode_seed(ProgramSpec(), 0, 0)
