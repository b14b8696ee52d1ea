"""
Sample and parameter containers shared by all estimation stages.

The model has no intercept: data are used as given, never centered
implicitly. ``Dataset.centered()`` is the explicit opt-in.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from spotiv.errors import DataValidationError


def _frozen_array(values: Any, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


class OutcomeKind(str, Enum):
    BINARY = "binary"
    CONTINUOUS = "continuous"


class Dataset(BaseModel):
    """Observed sample (y, d, W) with W = (z | x)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    y: np.ndarray = Field(..., description="Outcome vector of length n")
    d: np.ndarray = Field(..., description="Exposure vector of length n")
    W: np.ndarray = Field(..., description="n x p covariates, candidate IVs first")
    p_z: int = Field(..., ge=0, description="Number of candidate IV columns")
    outcome_kind: OutcomeKind = Field(default=OutcomeKind.BINARY)
    column_names: Optional[List[str]] = Field(
        default=None, description="Names of the W columns"
    )

    @model_validator(mode="before")
    @classmethod
    def _coerce_arrays(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        data = dict(data)
        kind = OutcomeKind(data.get("outcome_kind", OutcomeKind.BINARY))
        y = np.asarray(data["y"], dtype=float)
        if (
            kind == OutcomeKind.BINARY
            and np.all(np.isfinite(y))
            and np.all((y == 0) | (y == 1))
        ):
            data["y"] = _frozen_array(y, dtype=np.int64)
        else:
            data["y"] = _frozen_array(y)
        data["d"] = _frozen_array(data["d"])
        W = np.asarray(data["W"], dtype=float)
        if W.ndim == 1:
            W = W.reshape(-1, 1)
        data["W"] = _frozen_array(W)
        return data

    @property
    def n(self) -> int:
        return int(self.W.shape[0])

    @property
    def p(self) -> int:
        return int(self.W.shape[1])

    @property
    def p_x(self) -> int:
        return self.p - self.p_z

    @property
    def z(self) -> np.ndarray:
        return self.W[:, : self.p_z]

    @property
    def x(self) -> np.ndarray:
        return self.W[:, self.p_z :]

    @property
    def names(self) -> List[str]:
        """Column labels of W (z1..z{p_z}, x1..x{p_x} unless given)."""
        if self.column_names is not None:
            return list(self.column_names)
        return [f"z{j + 1}" for j in range(self.p_z)] + [
            f"x{j + 1}" for j in range(self.p_x)
        ]

    @classmethod
    def from_parts(
        cls,
        y: Any,
        d: Any,
        z: Any,
        x: Optional[Any] = None,
        outcome_kind: OutcomeKind = OutcomeKind.BINARY,
    ) -> "Dataset":
        """Assemble W = (z | x) from its IV and covariate blocks."""
        z = np.asarray(z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(-1, 1)
        if x is None:
            W = z
        else:
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x.reshape(-1, 1)
            W = np.hstack([z, x])
        return cls(y=y, d=d, W=W, p_z=z.shape[1], outcome_kind=outcome_kind)

    def take(self, indices: Sequence[int]) -> "Dataset":
        """Row subset, used for bootstrap resamples."""
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            y=self.y[idx],
            d=self.d[idx],
            W=self.W[idx],
            p_z=self.p_z,
            outcome_kind=self.outcome_kind,
            column_names=self.column_names,
        )

    def centered(self) -> "Dataset":
        """Copy with d and every W column centered (y untouched)."""
        return Dataset(
            y=self.y,
            d=self.d - self.d.mean(),
            W=self.W - self.W.mean(axis=0),
            p_z=self.p_z,
            outcome_kind=self.outcome_kind,
            column_names=self.column_names,
        )


def validate(dataset: Dataset) -> Dataset:
    """Return ``dataset`` unchanged if every invariant holds."""
    y, d, W = dataset.y, dataset.d, dataset.W
    if y.ndim != 1 or d.ndim != 1 or W.ndim != 2:
        raise DataValidationError(
            "y and d must be vectors and W a matrix", code="dimension_mismatch"
        )
    if not (y.shape[0] == d.shape[0] == W.shape[0]):
        raise DataValidationError(
            f"length mismatch: y={y.shape[0]}, d={d.shape[0]}, W rows={W.shape[0]}",
            code="dimension_mismatch",
        )
    if dataset.p_z > dataset.p or dataset.p_z < 1:
        raise DataValidationError(
            f"p_z={dataset.p_z} must lie in [1, p={dataset.p}]",
            code="dimension_mismatch",
        )
    if dataset.column_names is not None and len(dataset.column_names) != dataset.p:
        raise DataValidationError(
            "column_names must name every column of W", code="dimension_mismatch"
        )
    if not (
        np.all(np.isfinite(y)) and np.all(np.isfinite(d)) and np.all(np.isfinite(W))
    ):
        raise DataValidationError("non-finite values in sample", code="non_finite")
    if dataset.n < dataset.p + 2:
        raise DataValidationError(
            f"n too small: n={dataset.n} < p + 2 = {dataset.p + 2}",
            code="n_too_small",
        )
    if dataset.outcome_kind == OutcomeKind.BINARY:
        if not np.all((y == 0) | (y == 1)):
            raise DataValidationError(
                "outcome not in {0,1}", code="outcome_not_binary"
            )
        if np.unique(y).size < 2:
            raise DataValidationError(
                "binary outcome has a single class", code="single_class_outcome"
            )
    return dataset


class StructuralParams(BaseModel):
    """True model parameters; simulation ground truth only."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    beta: float
    kappa: np.ndarray
    eta: np.ndarray
    gamma: np.ndarray
    rho_v: float = 0.25

    @model_validator(mode="before")
    @classmethod
    def _coerce_arrays(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            for key in ("kappa", "eta", "gamma"):
                data[key] = _frozen_array(data[key])
        return data

    @model_validator(mode="after")
    def _check_finite(self) -> "StructuralParams":
        values = np.concatenate(
            [[self.beta, self.rho_v], self.kappa, self.eta, self.gamma]
        )
        if not np.all(np.isfinite(values)):
            raise ValueError("structural parameters must be finite")
        if not (self.kappa.shape == self.eta.shape == self.gamma.shape):
            raise ValueError("kappa, eta and gamma must have equal length")
        return self

    def valid_set(self) -> List[int]:
        """Relevant IVs with no direct effect and no confounding."""
        return [
            j
            for j in range(self.gamma.size)
            if self.gamma[j] != 0 and self.kappa[j] == 0 and self.eta[j] == 0
        ]

    def b_star(self) -> np.ndarray:
        """B* = [[beta, 0], [kappa, eta]], shape (p+1) x 2."""
        top = np.array([[self.beta, 0.0]])
        bottom = np.column_stack([self.kappa, self.eta])
        return np.vstack([top, bottom])

    def theta_star(self) -> np.ndarray:
        """Reduced-form index matrix (gamma, I) B*."""
        p = self.gamma.size
        return np.hstack([self.gamma.reshape(-1, 1), np.eye(p)]) @ self.b_star()


class EvalPoint(BaseModel):
    """Exposure levels (d, d') and covariate value w for CATE(d, d' | w)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    d: float
    d_prime: float
    w: np.ndarray

    @model_validator(mode="before")
    @classmethod
    def _coerce_w(cls, data: Any) -> Any:
        if isinstance(data, dict):
            data = dict(data)
            data["w"] = _frozen_array(data["w"])
        return data

    @model_validator(mode="after")
    def _check_finite(self) -> "EvalPoint":
        if not (
            np.isfinite(self.d) and np.isfinite(self.d_prime) and np.all(np.isfinite(self.w))
        ):
            raise ValueError("evaluation point must be finite")
        return self

    @property
    def is_contrast(self) -> bool:
        return self.d != self.d_prime

    def swapped(self) -> "EvalPoint":
        return EvalPoint(d=self.d_prime, d_prime=self.d, w=self.w)

    def to_dict(self) -> Dict[str, Any]:
        return {"d": self.d, "d_prime": self.d_prime, "w": self.w.tolist()}


def default_eval_point(p: int = 7) -> EvalPoint:
    """CATE(-1, 2 | w) with w = (0, ..., 0, 0.1)."""
    w = np.zeros(p)
    w[-1] = 0.1
    return EvalPoint(d=-1.0, d_prime=2.0, w=w)


EVAL_PRESETS = {"paper-default": default_eval_point}
