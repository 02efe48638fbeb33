# pylint: disable=redefined-outer-name,unused-variable,expression-not-assigned

import pytest

from playgrader.breakout import BreakoutEnv, BreakoutProgramSpec
from playgrader.const import BALL_SPEEDS, BREAKOUT_OBSERVATION_DIM
from playgrader.events import Action, BreakoutError, BreakoutEvent, Speed
from playgrader.exceptions import PlayGraderParamException
from playgrader.probes import brick_rows, longest_reversal_run
from playgrader.trajectory import rollout
from tests.conftest import ScriptedActor


def placed(program, x, y, vx, vy):
    env = BreakoutEnv(program)
    env.reset(seed=0)
    env.state.paddle_x = 0.5
    env.place_ball(x, y, vx, vy)
    return env


def play(env, steps):
    transitions = []
    for _ in range(steps):
        *_, info = env.step(Action.STAY)
        transitions.append(info["transition"])
    return transitions


def describe_breakout_program_spec():

    def it_requires_the_flag_for_other_row_counts():
        with pytest.raises(PlayGraderParamException):
            BreakoutProgramSpec(BreakoutError.NONE, 7)
        with pytest.raises(PlayGraderParamException):
            BreakoutProgramSpec(BreakoutError.WRONG_ROW_COUNT, 10)

    def it_round_trips_through_json(expect):
        program = BreakoutProgramSpec(BreakoutError.WRONG_ROW_COUNT | BreakoutError.PADDLE_SKEWER, 3)
        expect(program.to_json()["errors"]) == ["paddle_skewer", "wrong_row_count"]
        expect(BreakoutProgramSpec.from_json(program.to_json())) == program


def describe_breakout_env():

    def it_shows_the_brick_rows(expect):
        env = BreakoutEnv(BreakoutProgramSpec(BreakoutError.WRONG_ROW_COUNT, 13))
        observation, _ = env.reset(seed=0)
        expect(observation.shape) == (BREAKOUT_OBSERVATION_DIM,)
        expect(brick_rows(observation)) == 13

    def it_never_pays_reward(expect):
        trajectory = rollout(BreakoutEnv(BreakoutProgramSpec()), 0, ScriptedActor())
        expect(set(trajectory.env_rewards)) == {0.0}

    def describe_bricks():

        def it_bounces_and_deletes(expect):
            env = placed(BreakoutProgramSpec(), 0.1, 0.58, 0.0, 0.04)
            (transition,) = play(env, 1)
            record = transition.events[0]
            expect(record.event) == BreakoutEvent.BALL_HITS_BRICK
            expect(record.brick) == (9, 0)
            expect(env.state.bricks[9, 0]) == False
            expect(env.state.ball[3]) == pytest.approx(-0.04)

        def it_keeps_undeletable_bricks(expect):
            env = placed(BreakoutProgramSpec(BreakoutError.NO_DELETE_BRICK), 0.1, 0.58, 0.0, 0.04)
            play(env, 1)
            expect(env.state.bricks[9, 0]) == True
            expect(env.state.ball[3]) == pytest.approx(-0.04)

        def it_lets_the_ball_through_without_bounce(expect):
            env = placed(BreakoutProgramSpec(BreakoutError.NO_BOUNCE_OFF_BRICK), 0.1, 0.58, 0.0, 0.04)
            play(env, 1)
            expect(env.state.bricks[9, 0]) == False
            expect(env.state.ball[3]) == pytest.approx(0.04)

    def describe_paddle():

        def it_turns_a_falling_ball_once(expect):
            env = placed(BreakoutProgramSpec(), 0.3, 0.06, 0.0387, -0.01)
            expect(longest_reversal_run(play(env, 8))) == 1

        @pytest.mark.parametrize("speed", list(Speed))
        def it_catches_a_falling_ball_at_every_speed(expect, speed):
            env = placed(BreakoutProgramSpec(), 0.5, 0.09, 0.0, -BALL_SPEEDS[speed])
            transitions = play(env, 4)
            expect(any(t.done for t in transitions)) == False
            turns = [record for t in transitions for record in t.events
                     if record.event == BreakoutEvent.BALL_HITS_PADDLE and record.applied]
            expect(len(turns)) == 1
            expect(env.state.ball[3]) == pytest.approx(BALL_SPEEDS[speed])

        def it_skewers_a_ball_entering_from_the_side(expect):
            env = placed(BreakoutProgramSpec(BreakoutError.PADDLE_SKEWER), 0.3, 0.06, 0.0387, -0.01)
            expect(longest_reversal_run(play(env, 8))) >= 3

        def it_moves_backwards_when_reversed(expect):
            env = placed(BreakoutProgramSpec(BreakoutError.REVERSED_PADDLE), 0.5, 0.5, 0.0, 0.0)
            env.step(Action.RIGHT)
            expect(env.state.paddle_x) == pytest.approx(0.45)

    def describe_floor():

        def it_ends_the_episode(expect):
            env = placed(BreakoutProgramSpec(), 0.9, 0.02, 0.0, -0.04)
            _, _, terminated, _, _ = env.step(Action.STAY)
            expect(terminated) == True

        def it_bounces_when_the_floor_is_solid(expect):
            env = placed(BreakoutProgramSpec(BreakoutError.BOUNCE_OFF_FLOOR), 0.9, 0.02, 0.0, -0.04)
            _, _, terminated, _, _ = env.step(Action.STAY)
            expect(terminated) == False
            expect(env.state.ball[3]) == pytest.approx(0.04)

    def it_truncates_after_three_hundred_steps(expect):
        env = BreakoutEnv(BreakoutProgramSpec(BreakoutError.BOUNCE_OFF_FLOOR))
        trajectory = rollout(env, 0, ScriptedActor([Action.STAY]))
        expect(len(trajectory)) == 300
