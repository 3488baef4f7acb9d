"""Online learning to rank with top-k feedback."""

from .core import CoreError, InputError, DomainError, ConfigError, ContractError
from .core import Permutation, RelevanceVector, TopKFeedback, RunLog, make_rng
from .measures import MeasureId, evaluate
from .noncontextual import plan_blocks, run_noncontextual
from .contextual import ContextualConfig, run_contextual
from .runner.experiment import ExperimentSpec, run_experiment

__all__ = [
    "CoreError",
    "InputError",
    "DomainError",
    "ConfigError",
    "ContractError",
    "Permutation",
    "RelevanceVector",
    "TopKFeedback",
    "RunLog",
    "make_rng",
    "MeasureId",
    "evaluate",
    "plan_blocks",
    "run_noncontextual",
    "ContextualConfig",
    "run_contextual",
    "ExperimentSpec",
    "run_experiment",
]
