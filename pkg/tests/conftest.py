"""Unit tests configuration file."""

import logging
from itertools import cycle

import numpy as np
import pytest

from playgrader.bounce import BounceEnv, ProgramSpec
from playgrader.events import Action
from playgrader.trajectory import rollout


def pytest_configure(config):
    """Disable verbose output when running tests."""
    logging.basicConfig(level=logging.DEBUG)

    terminal = config.pluginmanager.getplugin('terminal')
    terminal.TerminalReporter.showfspath = False


class ScriptedActor:
    """Plays a fixed action sequence, repeating it as needed."""

    def __init__(self, actions=(Action.LEFT, Action.STAY, Action.RIGHT)):
        self._actions = list(actions)
        self._cycle = cycle(self._actions)

    def begin(self, observation):
        self._cycle = cycle(self._actions)
        return int(next(self._cycle))

    def advance(self, transition):
        return int(next(self._cycle))


def numeric_gradient(loss_fn, array, h=1e-5, indices=None):
    """Central differences of ``loss_fn()`` with respect to ``array``, perturbed in place."""
    grad = np.zeros_like(array)
    for index in indices if indices is not None else np.ndindex(*array.shape):
        original = array[index]
        array[index] = original + h
        plus = loss_fn()
        array[index] = original - h
        minus = loss_fn()
        array[index] = original
        grad[index] = (plus - minus) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-10):
    analytic, numeric = np.asarray(analytic, dtype=float), np.asarray(numeric, dtype=float)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), floor)
    return float(np.linalg.norm(analytic - numeric) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def correct_program():
    return ProgramSpec()


@pytest.fixture
def trajectory(correct_program):
    env = BounceEnv(correct_program)
    env.max_steps = 12
    return rollout(env, 7, ScriptedActor())
