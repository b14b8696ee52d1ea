"""SpotIV: causal effects with possibly invalid instruments."""

__version__ = "0.1.0"

from .models import (
    Dataset,
    OutcomeKind,
    EvalPoint,
    StructuralParams,
    ScenarioSpec,
    Scenario,
    ZDistribution,
    RunConfig,
    CateResult,
    MajorityTestResult,
    PipelineFit,
    SimulationReport,
    EstimateReport,
)
from .services import SpotIVEstimator, SimulationService, generate, true_cate_oracle
from .config import SpotIVConfig, get_config, reload_config
from .errors import SpotIVError, InputError, EstimationError
from .logging_config import setup_logging, get_logger

__all__ = [
    "Dataset",
    "OutcomeKind",
    "EvalPoint",
    "StructuralParams",
    "ScenarioSpec",
    "Scenario",
    "ZDistribution",
    "RunConfig",
    "CateResult",
    "MajorityTestResult",
    "PipelineFit",
    "SimulationReport",
    "EstimateReport",
    "SpotIVEstimator",
    "SimulationService",
    "generate",
    "true_cate_oracle",
    "SpotIVConfig",
    "get_config",
    "reload_config",
    "SpotIVError",
    "InputError",
    "EstimationError",
    "setup_logging",
    "get_logger",
]
