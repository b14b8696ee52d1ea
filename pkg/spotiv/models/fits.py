"""Immutable results of the estimation stages."""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


def _freeze(data: Any, keys: Tuple[str, ...]) -> Any:
    if isinstance(data, dict):
        data = dict(data)
        for key in keys:
            if key in data and data[key] is not None:
                array = np.array(data[key], dtype=float, copy=True)
                array.setflags(write=False)
                data[key] = array
    return data


class _ArrayModel(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)


class FirstStageFit(_ArrayModel):
    """Least-squares exposure model d = W gamma + v and the relevant set."""

    gamma_hat: np.ndarray
    v_hat: np.ndarray
    sigma_v_hat: float = Field(..., ge=0)
    Sigma_hat: np.ndarray
    Sigma_hat_inv: np.ndarray
    S_hat: List[int] = Field(default_factory=list, description="0-based IV indices")
    thresholds: np.ndarray = Field(..., description="Selection threshold per IV")
    warnings: List[str] = Field(default_factory=list)

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        return _freeze(
            data, ("gamma_hat", "v_hat", "Sigma_hat", "Sigma_hat_inv", "thresholds")
        )

    @property
    def selection_ratios(self) -> np.ndarray:
        """|gamma_j| over its threshold for every candidate IV."""
        p_z = self.thresholds.size
        with np.errstate(divide="ignore"):
            return np.abs(self.gamma_hat[:p_z]) / self.thresholds


class SirFit(_ArrayModel):
    """Sliced inverse regression estimate of the reduced-form index matrix."""

    Omega_hat: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    M_hat: int = Field(..., ge=1)
    Theta_hat: np.ndarray
    c0: float
    directions: np.ndarray = Field(
        ..., description="Theta_hat mapped back to the scale of W"
    )
    floored_eigenvalues: int = Field(
        default=0, description="Eigenvalues of Sigma_hat raised to the floor"
    )
    n_slices: Optional[int] = None

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        return _freeze(
            data,
            ("Omega_hat", "eigenvalues", "eigenvectors", "Theta_hat", "directions"),
        )


class StructuralFit(_ArrayModel):
    """Median-rule estimate of B from Theta_hat and gamma_hat."""

    b_hat: np.ndarray
    B_hat: np.ndarray = Field(..., description="(p+1) x M_hat")
    ratios: np.ndarray = Field(..., description="|S_hat| x M_hat ratio table")
    S_hat: List[int]

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        return _freeze(data, ("b_hat", "B_hat", "ratios"))


class PHatSource(str, Enum):
    KERNEL = "kernel"
    LOGISTIC = "logistic"


class MajorityTestResult(BaseModel):
    """Voting check of the majority rule."""

    votes: Dict[int, int]
    thresholds: Dict[Tuple[int, int], float]
    passed: bool
    p_hat_source: PHatSource
    majority_set: List[int] = Field(
        default_factory=list, description="IVs receiving more than |S|/2 votes"
    )
    ridge_fallback: bool = False
    scale: float = Field(
        default=1.0, description="Factor applied to Theta_hat column 1 before voting"
    )
    threshold_form: str = "sandwich"

    def to_report(self, names: Optional[List[str]] = None) -> Dict[str, Any]:
        label = (lambda j: names[j]) if names else (lambda j: str(j))
        return {
            "passed": self.passed,
            "p_hat_source": self.p_hat_source.value,
            "votes": {label(k): int(v) for k, v in self.votes.items()},
            "majority_set": [label(k) for k in self.majority_set],
            "ridge_fallback": self.ridge_fallback,
            "threshold_form": self.threshold_form,
        }


class BandwidthRule(str, Enum):
    ROT = "rot"
    FIXED = "fixed"


class KernelConfig(_ArrayModel):
    """Bandwidths of the product box kernel, one per index."""

    bandwidths: np.ndarray
    rule: BandwidthRule = BandwidthRule.ROT
    rot_constant: float = 0.9

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        return _freeze(data, ("bandwidths",))

    @model_validator(mode="after")
    def _check_positive(self) -> "KernelConfig":
        if self.bandwidths.ndim != 1 or not np.all(self.bandwidths > 0):
            raise ValueError("bandwidths must be a vector of positive values")
        return self


class PhiEstimate(_ArrayModel):
    """Partial mean at one (d, w) with its linear weights."""

    phi: float
    weights: np.ndarray = Field(..., description="a_j, summing to retained share")
    dropped: int = Field(..., ge=0)

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        return _freeze(data, ("weights",))

    @property
    def retained_share(self) -> float:
        return float(self.weights.sum())


class CateResult(_ArrayModel):
    """Point estimate, standard errors and interval for CATE(d, d' | w)."""

    phi_d: float
    phi_dprime: float
    cate: float
    plug_in_se: float = Field(..., ge=0)
    boot_se: Optional[float] = None
    ci: Optional[Tuple[float, float]] = None
    alpha: Optional[float] = None
    n_boot: int = 0
    dropped_points: int = 0
    weights_a: np.ndarray
    weights_c: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce(cls, data: Any) -> Any:
        return _freeze(data, ("weights_a", "weights_c"))

    def with_bootstrap(
        self, boot_se: float, ci: Tuple[float, float], n_boot: int, alpha: float
    ) -> "CateResult":
        return self.model_copy(
            update={"boot_se": boot_se, "ci": ci, "n_boot": n_boot, "alpha": alpha}
        )

    def to_report(self, include_weights: bool = False) -> Dict[str, Any]:
        report = {
            "phi_d": self.phi_d,
            "phi_dprime": self.phi_dprime,
            "cate": self.cate,
            "plug_in_se": self.plug_in_se,
            "boot_se": self.boot_se,
            "ci": list(self.ci) if self.ci is not None else None,
            "alpha": self.alpha,
            "n_boot": self.n_boot,
            "dropped_points": self.dropped_points,
        }
        if include_weights:
            report["weights_a"] = self.weights_a.tolist()
            report["weights_c"] = self.weights_c.tolist()
        return report


class PipelineFit(BaseModel):
    """All stage fits for one dataset; the input to every CATE evaluation."""

    model_config = ConfigDict(frozen=True)

    first_stage: FirstStageFit
    sir: SirFit
    structural: StructuralFit
    kernel: KernelConfig
    warnings: List[str] = Field(default_factory=list)
