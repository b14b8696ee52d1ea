"""
Full SpotIV pipeline: first stage, SIR, median rule, partial mean and the
bootstrap interval.
"""

import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from tenacity import Retrying, retry_if_exception_type
from tenacity.stop import stop_base

from spotiv.config import SpotIVConfig, get_config
from spotiv.errors import DataValidationError, EstimationError, InputError
from spotiv.logging_config import get_logger, log_performance
from spotiv.models import (
    CateResult,
    Dataset,
    EvalPoint,
    MajorityTestResult,
    OutcomeKind,
    PHatSource,
    PipelineFit,
    validate,
)
from spotiv.services.first_stage import fit_first_stage
from spotiv.services.median import fit_structural, majority_vote_test
from spotiv.services.partial_mean import estimate_cate, estimate_phi, kernel_config_for
from spotiv.services.sir import fit_sir
from spotiv.services.streams import StreamRole, make_rng

logger = get_logger(__name__)


class BootstrapFailureError(EstimationError):
    """Too many bootstrap resamples failed to produce an estimate."""

    code = "bootstrap_failure"
    stage = "bootstrap"


class ResampleBandwidthError(EstimationError):
    """A resample selected an M_hat that the fixed bandwidths do not fit."""

    code = "bandwidth_rank_mismatch"
    stage = "bootstrap"


class stop_when_budget_spent(stop_base):
    """Stop retrying once the attempts shared by all draws are used up."""

    def __init__(self, budget: "_AttemptBudget"):
        self.budget = budget

    def __call__(self, retry_state) -> bool:
        return self.budget.spent


class _AttemptBudget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0
        self.failures = 0

    @property
    def spent(self) -> bool:
        return self.used >= self.limit


class SpotIVEstimator:
    def __init__(
        self,
        config: Optional[SpotIVConfig] = None,
        c0: Optional[float] = None,
        n_slices: Optional[int] = None,
        bandwidth: Optional[Sequence[float]] = None,
        p_hat_source: Optional[PHatSource] = None,
    ):
        """
        Initialize the estimator with dependency injection.

        Args:
            config: Configuration instance (uses global config if None)
            c0: Rank-selection penalty exponent (config.c0 if None)
            n_slices: Slices for continuous outcomes (config.n_slices if None)
            bandwidth: Fixed kernel bandwidths; rule of thumb if None
            p_hat_source: Fitted probabilities for the voting test
        """
        self.config = config or get_config()
        self.c0 = self.config.c0 if c0 is None else c0
        self.n_slices = self.config.n_slices if n_slices is None else n_slices
        self.bandwidth = None if bandwidth is None else list(bandwidth)
        self.p_hat_source = PHatSource(p_hat_source or self.config.p_hat_source)

    def fit(self, data: Dataset) -> PipelineFit:
        """Validate the sample and run every stage up to the kernel bandwidths."""
        validate(data)
        first_stage = fit_first_stage(data, self.config)
        sir = fit_sir(data, first_stage, self.c0, self.n_slices, self.config)
        structural = fit_structural(sir, first_stage)
        kernel = kernel_config_for(
            data, structural, first_stage, self.bandwidth, self.config
        )
        warnings = list(first_stage.warnings)
        if sir.floored_eigenvalues:
            warnings.append(
                f"{sir.floored_eigenvalues} eigenvalues of Sigma_hat floored"
            )
        return PipelineFit(
            first_stage=first_stage,
            sir=sir,
            structural=structural,
            kernel=kernel,
            warnings=warnings,
        )

    def estimate_phi(
        self, data: Dataset, d: float, w: np.ndarray, fit: Optional[PipelineFit] = None
    ) -> float:
        fit = fit or self.fit(data)
        return estimate_phi(
            d,
            w,
            fit.structural,
            fit.first_stage,
            data,
            fit.kernel,
            self.config.kernel_chunk_size,
        ).phi

    def estimate_cate(
        self, data: Dataset, point: EvalPoint, fit: Optional[PipelineFit] = None
    ) -> CateResult:
        """Point estimate and plug-in SE of CATE(d, d' | w)."""
        fit = fit or self.fit(data)
        return estimate_cate(
            point, fit.structural, fit.first_stage, data, fit.kernel, self.config
        )

    def majority_test(
        self, data: Dataset, fit: Optional[PipelineFit] = None
    ) -> MajorityTestResult:
        fit = fit or self.fit(data)
        return majority_vote_test(
            fit.sir, fit.first_stage, data, self.p_hat_source, self.config
        )

    def _resample_cate(
        self,
        data: Dataset,
        point: EvalPoint,
        rng: np.random.Generator,
        budget: _AttemptBudget,
    ) -> float:
        budget.used += 1
        indices = rng.integers(0, data.n, size=data.n)
        try:
            return self.estimate_cate(data.take(indices), point).cate
        except (EstimationError, DataValidationError):
            budget.failures += 1
            raise
        except InputError as e:
            if e.code != "bad_bandwidth":
                raise
            budget.failures += 1
            raise ResampleBandwidthError(
                f"resample does not match the fixed bandwidths: {e}"
            ) from e

    def bootstrap(
        self,
        data: Dataset,
        point: EvalPoint,
        estimate: CateResult,
        n_boot: Optional[int] = None,
        alpha: Optional[float] = None,
        seed: int = 0,
        replication: int = 0,
    ) -> CateResult:
        """
        Nonparametric bootstrap of the whole pipeline.

        Draw b uses its own stream keyed by (replication, b); a failed resample
        is redrawn from the same stream. All draws share a budget of
        boot_attempt_factor * n_boot attempts.
        """
        n_boot = n_boot or self.config.n_boot
        alpha = self.config.alpha if alpha is None else alpha
        budget = _AttemptBudget(self.config.boot_attempt_factor * n_boot)
        retryer = Retrying(
            stop=stop_when_budget_spent(budget),
            retry=retry_if_exception_type((EstimationError, DataValidationError)),
            reraise=True,
        )

        replicates: List[float] = []
        for b in range(n_boot):
            if budget.spent:
                raise BootstrapFailureError(
                    f"bootstrap budget of {budget.limit} attempts spent "
                    f"after {b} of {n_boot} draws"
                )
            rng = make_rng(seed, StreamRole.BOOTSTRAP, replication, b)
            try:
                replicates.append(
                    retryer(self._resample_cate, data, point, rng, budget)
                )
            except (EstimationError, DataValidationError) as e:
                raise BootstrapFailureError(
                    f"bootstrap budget of {budget.limit} attempts spent "
                    f"after {b} of {n_boot} draws: {e}"
                ) from e

        if budget.failures:
            logger.warning(
                "Redrew failed bootstrap resamples",
                extra={"failures": budget.failures, "n_boot": n_boot},
            )
        boot_se = float(np.std(replicates, ddof=1))
        z = float(stats.norm.ppf(1.0 - alpha / 2.0))
        ci: Tuple[float, float] = (
            estimate.cate - z * boot_se,
            estimate.cate + z * boot_se,
        )
        return estimate.with_bootstrap(boot_se=boot_se, ci=ci, n_boot=n_boot, alpha=alpha)

    def run(
        self,
        data: Dataset,
        point: EvalPoint,
        n_boot: Optional[int] = None,
        alpha: Optional[float] = None,
        seed: int = 0,
        replication: int = 0,
        with_majority_test: bool = True,
    ) -> Tuple[PipelineFit, CateResult, Optional[MajorityTestResult]]:
        """Fit, estimate, bootstrap and (binary outcomes) run the voting test."""
        start_time = time.time()
        fit = self.fit(data)
        estimate = self.estimate_cate(data, point, fit)
        result = self.bootstrap(
            data, point, estimate, n_boot, alpha, seed=seed, replication=replication
        )
        test = None
        if with_majority_test and data.outcome_kind == OutcomeKind.BINARY:
            test = self.majority_test(data, fit)
        log_performance(
            logger,
            "spotiv_estimate",
            time.time() - start_time,
            n=data.n,
            M_hat=fit.sir.M_hat,
            n_boot=result.n_boot,
            replication=replication,
        )
        return fit, result, test
