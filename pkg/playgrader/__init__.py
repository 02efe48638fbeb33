from pkg_resources import DistributionNotFound, get_distribution

from .bounce import BounceEnv, ProgramSpec
from .breakout import BreakoutEnv, BreakoutProgramSpec
from .corpus import CorpusConfig, LabeledProgram, Rubric, generate, read_dataset, write_dataset

from .exceptions import (
    PlayGraderConfigurationException,
    PlayGraderException,
    PlayGraderIOException,
    PlayGraderNumericException,
    PlayGraderParamException,
    PlayGraderParseException,
    PlayGraderUsageException,
)

from .grader import GradingSystem, MetricsReport, PredictedLabel, evaluate, grade
from .trainer import TrainConfig, TrainMode, train

try:
    __version__ = get_distribution('playgrader').version
except DistributionNotFound:
    __version__ = '(local)'
