# pylint: disable=redefined-outer-name,unused-variable,expression-not-assigned

import csv

import numpy as np
import pytest

from playgrader.const import BOUNCE_OBSERVATION_DIM
from playgrader.exceptions import PlayGraderConfigurationException, PlayGraderUsageException
from playgrader.networks import QNetwork
from playgrader.policy import (
    EpsilonSchedule,
    ExplorationPolicy,
    ReplayBuffer,
    StoredEpisode,
    TrainingLog,
    act_epsilon_greedy,
    double_q_targets,
    dqn_update,
    sync_target,
)


def stored(trajectory, value=0.0):
    return StoredEpisode(trajectory, np.full(len(trajectory), value))


def describe_epsilon_schedule():

    def it_anneals_linearly(expect):
        schedule = EpsilonSchedule(1.0, 0.01, 250_000)
        expect(schedule(0)) == 1.0
        expect(schedule(125_000)) == pytest.approx(0.505)

    def it_holds_the_floor_after_the_horizon(expect):
        schedule = EpsilonSchedule(1.0, 0.01, 250_000)
        expect(schedule(250_000)) == 0.01
        expect(schedule(10_000_000)) == 0.01


def describe_act_epsilon_greedy():

    def it_breaks_ties_towards_the_first_action(expect, rng):
        expect(act_epsilon_greedy(np.array([1.0, 1.0, 0.5]), 0.0, rng)) == 0

    def it_explores_uniformly(expect, rng):
        actions = [act_epsilon_greedy(np.array([0.0, 1.0, 0.0]), 1.0, rng) for _ in range(3000)]
        counts = np.bincount(actions, minlength=3) / 3000
        expect(np.allclose(counts, 1 / 3, atol=0.05)) == True

    def it_rejects_invalid_epsilon(rng):
        with pytest.raises(PlayGraderConfigurationException):
            act_epsilon_greedy(np.zeros(3), 1.5, rng)


def describe_replay_buffer():

    def it_waits_for_enough_episodes(expect, trajectory, rng):
        buffer = ReplayBuffer(capacity=10, min_size=3)
        buffer.insert(stored(trajectory))
        expect(buffer.ready) == False
        with pytest.raises(PlayGraderUsageException):
            buffer.sample(2, rng)

    def it_evicts_the_oldest_episodes(expect, trajectory, rng):
        buffer = ReplayBuffer(capacity=2, min_size=1)
        for value in (1.0, 2.0, 3.0):
            buffer.insert(stored(trajectory, value))
        expect(len(buffer)) == 2
        expect({float(e.rewards[0]) for e in buffer.sample(50, rng)}) == {2.0, 3.0}

    def it_requires_one_reward_per_step(trajectory):
        buffer = ReplayBuffer(capacity=2, min_size=1)
        with pytest.raises(PlayGraderUsageException):
            buffer.insert(StoredEpisode(trajectory, np.zeros(len(trajectory) + 1)))


def describe_double_q_targets():

    def it_evaluates_the_online_argmax_with_the_target(expect):
        targets = double_q_targets(np.array([1.0, 1.0]), np.array([[0.2, 0.7, 0.1]] * 2),
                                   np.array([[0.3, 0.5, 0.9]] * 2), np.array([False, True]), gamma=0.98)
        expect(targets.tolist()) == pytest.approx([1.49, 1.0])

    def it_solves_a_chain(expect):
        # states 0 and 1, entering state 2 pays 1 and ends the episode; action 0 steps left, 1 right
        gamma = 0.9
        transitions = [(s, a, min(2, s + 1) if a else max(0, s - 1)) for s in (0, 1) for a in (0, 1)]
        online = np.zeros((3, 2))
        target = online.copy()
        for sweep in range(400):
            for s, a, s_next in transitions:
                terminal = s_next == 2
                reward = 1.0 if terminal else 0.0
                y = double_q_targets(np.array([reward]), online[[s_next]], target[[s_next]], np.array([terminal]),
                                     gamma)[0]
                online[s, a] += 0.5 * (y - online[s, a])
            if sweep % 5 == 0:
                target = online.copy()
        optimal = np.array([[0.81, 0.9], [0.81, 1.0]])
        expect(float(np.abs(online[:2] - optimal).max())) < 1e-2


def describe_dqn_update():

    def it_reduces_the_td_error_on_a_fixed_batch(expect, trajectory, rng):
        online = QNetwork(BOUNCE_OBSERVATION_DIM, seed=1)
        target = QNetwork(BOUNCE_OBSERVATION_DIM, seed=1)
        sync_target(online, target)
        batch = [StoredEpisode(trajectory, rng.normal(size=len(trajectory))),
                 StoredEpisode(trajectory.prefix(6), rng.normal(size=6))]
        losses = [dqn_update(online, target, batch, lr=1e-3) for _ in range(30)]
        expect(losses[-1]) < losses[0]

    def it_supports_a_huber_loss(expect, trajectory):
        online = QNetwork(BOUNCE_OBSERVATION_DIM, seed=1)
        loss = dqn_update(online, online, [stored(trajectory, 5.0)], lr=0.0, td_loss="huber")
        expect(loss) > 0.0

    def it_rejects_unknown_losses(trajectory):
        online = QNetwork(BOUNCE_OBSERVATION_DIM, seed=1)
        with pytest.raises(PlayGraderConfigurationException):
            dqn_update(online, online, [stored(trajectory)], td_loss="absolute")


def describe_exploration_policy():

    def it_syncs_the_target_on_schedule(expect, trajectory, rng):
        policy = ExplorationPolicy(BOUNCE_OBSERVATION_DIM, seed=2, min_buffer=1, sync_every=2)
        policy.buffer.insert(stored(trajectory, 1.0))
        policy.update(rng, batch_size=1, lr=1e-2)
        expect(np.array_equal(policy.online.params["value.bias"].data,
                              policy.target.params["value.bias"].data)) == False
        policy.update(rng, batch_size=1, lr=1e-2)
        for name, tensor in policy.online.params.items():
            expect(np.array_equal(tensor.data, policy.target.params[name].data)) == True


def describe_training_log():

    def it_writes_one_row_per_entry(expect, tmp_path):
        log = TrainingLog(tmp_path / "log.csv")
        log.append(10, 0.5, 0.9, -0.1)
        log.append(20, 0.25, 0.8, 0.2)
        with open(tmp_path / "log.csv") as f:
            rows = list(csv.DictReader(f))
        expect([row["step"] for row in rows]) == ["10", "20"]
        expect(float(rows[1]["loss"])) == 0.25
