"""Scenario, run configuration and report models."""

from enum import Enum
from typing import Any, Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from spotiv.models.dataset import EVAL_PRESETS, EvalPoint

UNIFORM_HALF_WIDTH = 1.73


class Scenario(str, Enum):
    BINARY_I = "binary_i"
    CONTINUOUS_II = "continuous_ii"
    VIOLATION_A = "violation_a"
    VIOLATION_B = "violation_b"


class ZDistribution(str, Enum):
    NORMAL = "normal"
    UNIFORM = "uniform"


class ParamOverrides(BaseModel):
    """Replace individual true parameters of a scenario (test designs)."""

    beta: Optional[float] = None
    gamma: Optional[List[float]] = None
    kappa: Optional[List[float]] = None
    eta: Optional[List[float]] = None
    rho_v: Optional[float] = None


class ScenarioSpec(BaseModel):
    scenario: Scenario = Scenario.BINARY_I
    n: int = Field(default=1000, gt=0)
    c_gamma: float = Field(default=0.8, gt=0)
    z_dist: ZDistribution = ZDistribution.NORMAL
    seed: int = Field(default=0, ge=0, lt=2**64)
    overrides: Optional[ParamOverrides] = None

    def cell_key(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.value,
            "n": self.n,
            "c_gamma": self.c_gamma,
            "z_dist": self.z_dist.value,
        }


class RunMode(str, Enum):
    ESTIMATE = "estimate"
    SIMULATE = "simulate"
    MAJORITY_TEST = "majority-test"
    GENERATE = "generate"
    ORACLE = "oracle"


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"


class EvalPointSpec(BaseModel):
    """Serializable form of an evaluation point."""

    d: float
    d_prime: float
    w: List[float]

    def to_point(self) -> EvalPoint:
        return EvalPoint(d=self.d, d_prime=self.d_prime, w=np.asarray(self.w))


class RunConfig(BaseModel):
    """Everything a CLI invocation needs; loadable from a JSON file."""

    mode: RunMode = RunMode.ESTIMATE
    input: Optional[str] = Field(default=None, description="CSV path")
    pz: Optional[int] = Field(default=None, ge=1)
    outcome_kind: Optional[str] = None
    scenario: Optional[ScenarioSpec] = None
    eval: Union[str, EvalPointSpec] = "paper-default"
    replications: int = Field(default=200, ge=1)
    n_boot: int = Field(default=50, ge=2)
    alpha: float = Field(default=0.05, gt=0, lt=1)
    c0: float = Field(default=0.5, gt=0, lt=1)
    n_slices: int = Field(default=10, ge=2)
    bandwidth: Optional[List[float]] = None
    p_hat_source: str = "logistic"
    seed: int = Field(default=0, ge=0, lt=2**64)
    out: Optional[str] = None
    format: OutputFormat = OutputFormat.JSON
    center: bool = False
    timing: bool = False
    weights: bool = Field(
        default=False, description="Export weights_a and weights_c with the CATE"
    )
    threads: Optional[int] = Field(default=None, ge=1)
    n_grid: Optional[List[int]] = Field(
        default=None, description="Sample sizes of the grid; one cell per (n, c_gamma)"
    )
    c_gamma_grid: Optional[List[float]] = Field(
        default=None, description="IV strengths of the grid; one cell per (n, c_gamma)"
    )
    oracle_grid: List[float] = Field(
        default_factory=lambda: [x / 2.0 for x in range(-6, 7)],
        description="Exposure levels tabulated by the oracle mode",
    )

    @model_validator(mode="before")
    @classmethod
    def _seed_scenario(cls, data: Any) -> Any:
        if isinstance(data, dict) and isinstance(data.get("scenario"), dict):
            scenario = dict(data["scenario"])
            scenario.setdefault("seed", data.get("seed", 0))
            data = {**data, "scenario": scenario}
        return data

    @model_validator(mode="after")
    def _check_sources(self) -> "RunConfig":
        has_input = self.input is not None
        has_scenario = self.scenario is not None
        if self.mode == RunMode.ESTIMATE and not has_input:
            raise ValueError("estimate mode needs an input CSV")
        if self.mode in (RunMode.SIMULATE, RunMode.GENERATE, RunMode.ORACLE):
            if not has_scenario:
                raise ValueError(f"{self.mode.value} mode needs a scenario")
        if has_input and has_scenario:
            raise ValueError("give either an input CSV or a scenario, not both")
        if self.mode == RunMode.MAJORITY_TEST and not (has_input or has_scenario):
            raise ValueError("majority-test mode needs an input CSV or a scenario")
        if isinstance(self.eval, str) and self.eval not in EVAL_PRESETS:
            raise ValueError(f"unknown evaluation preset: {self.eval}")
        return self

    def resolve_eval(self, p: int) -> EvalPoint:
        if isinstance(self.eval, str):
            return EVAL_PRESETS[self.eval](p)
        point = self.eval.to_point()
        if point.w.size != p:
            raise ValueError(f"evaluation w has length {point.w.size}, expected {p}")
        return point

    def scenario_cells(self) -> List[ScenarioSpec]:
        """Scenario specs for every (n, c_gamma) pair, n varying slowest."""
        if self.scenario is None:
            return []
        ns = self.n_grid or [self.scenario.n]
        strengths = self.c_gamma_grid or [self.scenario.c_gamma]
        return [
            self.scenario.model_copy(update={"n": n, "c_gamma": c})
            for n in ns
            for c in strengths
        ]


class CellRow(BaseModel):
    """One simulation cell, mirroring the MAE / COV / SE / MT table columns."""

    scenario: Scenario
    n: int
    c_gamma: float
    z_dist: ZDistribution
    MAE: Optional[float] = Field(default=None, ge=0)
    COV: Optional[float] = Field(default=None, ge=0, le=1)
    SE: Optional[float] = None
    MT: Optional[float] = Field(default=None, ge=0, le=1)
    replications: int
    failures: int = 0
    dropped_mean: Optional[float] = None
    true_cate: Optional[float] = None
    wall_time: Optional[float] = None


class SimulationReport(BaseModel):
    rows: List[CellRow]
    seed: int
    n_boot: int
    alpha: float
    c0: float
    n_slices: int
    oracle_n_mc: int
    eval: EvalPointSpec


class EstimateReport(BaseModel):
    """Full-pipeline output for one dataset."""

    n: int
    p: int
    p_z: int
    outcome_kind: str
    columns: List[str]
    gamma_hat: List[float]
    sigma_v_hat: float
    S_hat: List[str]
    M_hat: int
    eigenvalues: List[float]
    b_hat: List[float]
    B_hat: List[List[float]]
    bandwidths: List[float]
    eval: EvalPointSpec
    cate: Dict[str, Any]
    majority_test: Optional[Dict[str, Any]] = None
    warnings: List[str] = Field(default_factory=list)


class ReplicationOutcome(BaseModel):
    """Result of one simulated dataset, or the error that stopped it."""

    replication: int
    cate: Optional[float] = None
    boot_se: Optional[float] = None
    ci: Optional[List[float]] = None
    dropped_points: Optional[int] = None
    passed: Optional[bool] = None
    true_cate: Optional[float] = Field(
        default=None, description="Per-replication truth for random designs"
    )
    error: Optional[str] = None
    error_code: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


class MajorityTestReport(BaseModel):
    """First stage, SIR rank and voting outcome for one dataset."""

    n: int
    p_z: int
    columns: List[str]
    gamma_hat: List[float]
    S_hat: List[str]
    M_hat: int
    majority_test: Dict[str, Any]
    warnings: List[str] = Field(default_factory=list)


class OracleReport(BaseModel):
    """Monte Carlo phi*(d, w) over a grid and the true CATE at one point."""

    scenario: Scenario
    c_gamma: float
    seed: int
    n_mc: int
    eval: EvalPointSpec
    true_cate: float
    grid: List[float]
    phi: List[float]
