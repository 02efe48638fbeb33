# pylint: disable=redefined-outer-name,unused-variable,expression-not-assigned

import numpy as np
import pytest

from playgrader.corpus import CorpusConfig, generate
from playgrader.exceptions import PlayGraderConfigurationException, PlayGraderUsageException
from playgrader.meta import ProgramSplit, meta_reset


@pytest.fixture
def programs():
    return generate(CorpusConfig.build(rubric="8", n=6, p=0.5, seed=8))


def describe_meta_reset():

    def it_hides_test_labels_until_a_prediction(expect, programs, rng):
        episode = meta_reset(ProgramSplit.test(programs), rng, seed=1)
        with pytest.raises(PlayGraderUsageException):
            episode.label
        expect(episode.submit([0] * 8)) == episode.program.label
        expect(episode.label) == episode.program.label
        expect(episode.prediction) == (0,) * 8

    def it_reveals_training_labels(expect, programs, rng):
        episode = meta_reset(ProgramSplit.train(programs), rng)
        expect(episode.label) == episode.program.label
        expect(episode.program in programs) == True

    def it_resets_a_fresh_environment(expect, programs, rng):
        episode = meta_reset(ProgramSplit.train(programs), rng, seed=4)
        expect(episode.env.state is not None) == True
        expect(episode.spec) == episode.program.spec

    def it_is_reproducible_under_a_fixed_seed(expect, programs):
        for seed in (None, 3):
            first = meta_reset(ProgramSplit.train(programs), np.random.default_rng(11), seed=seed)
            second = meta_reset(ProgramSplit.train(programs), np.random.default_rng(11), seed=seed)
            expect(first.program is second.program) == True
            expect(first.seed) == second.seed
            expect(first.env.state) == second.env.state
            expect(np.array_equal(first.env.encode_observation(), second.env.encode_observation())) == True

    def it_samples_programs_uniformly(expect, programs, rng):
        tasks = ProgramSplit.train(programs[:4])
        index = {id(program): i for i, program in enumerate(tasks.programs)}
        counts = np.zeros(4)
        for _ in range(10_000):
            counts[index[id(meta_reset(tasks, rng).program)]] += 1
        sigma = np.sqrt(10_000 * 0.25 * 0.75)
        expect(np.abs(counts - 2500).max()) < 4 * sigma

    def it_refuses_empty_splits():
        with pytest.raises(PlayGraderConfigurationException):
            ProgramSplit.test([])
