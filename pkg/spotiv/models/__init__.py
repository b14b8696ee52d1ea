from .dataset import (
    Dataset,
    OutcomeKind,
    StructuralParams,
    EvalPoint,
    validate,
    default_eval_point,
    EVAL_PRESETS,
)
from .fits import (
    FirstStageFit,
    SirFit,
    StructuralFit,
    MajorityTestResult,
    PHatSource,
    KernelConfig,
    BandwidthRule,
    PhiEstimate,
    CateResult,
    PipelineFit,
)
from .simulation import (
    Scenario,
    ZDistribution,
    ParamOverrides,
    ScenarioSpec,
    RunMode,
    OutputFormat,
    EvalPointSpec,
    RunConfig,
    CellRow,
    SimulationReport,
    EstimateReport,
    ReplicationOutcome,
    MajorityTestReport,
    OracleReport,
    UNIFORM_HALF_WIDTH,
)

__all__ = [
    "Dataset",
    "OutcomeKind",
    "StructuralParams",
    "EvalPoint",
    "validate",
    "default_eval_point",
    "EVAL_PRESETS",
    "FirstStageFit",
    "SirFit",
    "StructuralFit",
    "MajorityTestResult",
    "PHatSource",
    "KernelConfig",
    "BandwidthRule",
    "PhiEstimate",
    "CateResult",
    "PipelineFit",
    "Scenario",
    "ZDistribution",
    "ParamOverrides",
    "ScenarioSpec",
    "RunMode",
    "OutputFormat",
    "EvalPointSpec",
    "RunConfig",
    "CellRow",
    "SimulationReport",
    "EstimateReport",
    "ReplicationOutcome",
    "MajorityTestReport",
    "OracleReport",
    "UNIFORM_HALF_WIDTH",
]
