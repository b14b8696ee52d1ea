"""Exception hierarchy shared by all estimation stages."""

from typing import Optional


class SpotIVError(Exception):
    """Base exception for SpotIV operations."""

    code: str = "spotiv_error"
    stage: str = "unknown"

    def __init__(
        self, message: str, code: Optional[str] = None, stage: Optional[str] = None
    ):
        super().__init__(message)
        if code is not None:
            self.code = code
        if stage is not None:
            self.stage = stage


class InputError(SpotIVError):
    """Problems with the supplied data or configuration."""

    code = "input_error"
    stage = "input"


class EstimationError(SpotIVError):
    """A pipeline stage could not produce an estimate."""

    code = "estimation_failure"


class DataValidationError(InputError):
    """A dataset violates one of its invariants."""

    stage = "data_model"
