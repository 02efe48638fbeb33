from typing import Union

from .bounce import BounceEnv, ProgramSpec
from .breakout import BreakoutEnv, BreakoutProgramSpec
from .const import BOUNCE_OBSERVATION_DIM, BREAKOUT_OBSERVATION_DIM
from .corpus import EnvName
from .exceptions import PlayGraderConfigurationException

"""Dictionary of all environments with a callable as value.
The callable expects the program the environment should run."""
_environments = {
    EnvName.BOUNCE: lambda program: BounceEnv(program),
    EnvName.BREAKOUT: lambda program: BreakoutEnv(program),
}

_program_types = {
    EnvName.BOUNCE: ProgramSpec,
    EnvName.BREAKOUT: BreakoutProgramSpec,
}

_observation_dims = {
    EnvName.BOUNCE: BOUNCE_OBSERVATION_DIM,
    EnvName.BREAKOUT: BREAKOUT_OBSERVATION_DIM,
}


def env_name_of(program: Union[ProgramSpec, BreakoutProgramSpec]) -> EnvName:
    for name, program_type in _program_types.items():
        if isinstance(program, program_type):
            return name
    raise PlayGraderConfigurationException("No environment runs programs of type %s.", type(program).__name__)


def make_env(program):
    return _environments[env_name_of(program)](program)


def observation_dim(env: EnvName) -> int:
    return _observation_dims[EnvName(env)]
