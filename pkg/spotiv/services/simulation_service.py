"""
Monte Carlo harness: replications of a scenario cell, scored against the
oracle CATE and reduced to one table row per cell.
"""

import asyncio
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from spotiv.config import SpotIVConfig, get_config
from spotiv.errors import EstimationError, SpotIVError
from spotiv.logging_config import get_logger, log_error_with_context, log_performance
from spotiv.models import (
    CellRow,
    EvalPoint,
    EvalPointSpec,
    ReplicationOutcome,
    Scenario,
    ScenarioSpec,
    SimulationReport,
)
from spotiv.services.dgp import generate, scenario_params, true_cate_oracle
from spotiv.services.estimator import SpotIVEstimator

logger = get_logger(__name__)


class SimulationError(EstimationError):
    """A cell lost more replications than the tolerated failure rate."""

    code = "too_many_failures"
    stage = "simulation"


def run_replication(
    spec: ScenarioSpec,
    point: EvalPoint,
    replication: int,
    n_boot: int,
    alpha: float,
    estimator_options: Dict[str, Any],
    config: SpotIVConfig,
    oracle_n_mc: Optional[int] = None,
) -> ReplicationOutcome:
    """
    Generate, estimate and bootstrap one dataset.

    Module-level so it can be shipped to worker processes. Pipeline errors
    are returned in the outcome rather than raised.
    """
    try:
        data, params = generate(spec, replication)
        estimator = SpotIVEstimator(config=config, **estimator_options)
        _, result, test = estimator.run(
            data,
            point,
            n_boot=n_boot,
            alpha=alpha,
            seed=spec.seed,
            replication=replication,
        )
        true_cate = None
        if oracle_n_mc is not None:
            true_cate = true_cate_oracle(spec, point, oracle_n_mc, params=params)
        return ReplicationOutcome(
            replication=replication,
            cate=result.cate,
            boot_se=result.boot_se,
            ci=list(result.ci),
            dropped_points=result.dropped_points,
            passed=None if test is None else test.passed,
            true_cate=true_cate,
        )
    except SpotIVError as e:
        return ReplicationOutcome(
            replication=replication, error=str(e), error_code=e.code
        )


def summarize_cell(
    spec: ScenarioSpec,
    outcomes: Sequence[ReplicationOutcome],
    true_cate: Optional[float],
    wall_time: Optional[float] = None,
) -> CellRow:
    """
    Reduce replication outcomes to MAE (median absolute error), COV, mean
    bootstrap SE and MT (share of replications passing the voting test).
    """
    outcomes = sorted(outcomes, key=lambda o: o.replication)
    succeeded = [o for o in outcomes if not o.failed]
    failures = len(outcomes) - len(succeeded)
    row = dict(
        scenario=spec.scenario,
        n=spec.n,
        c_gamma=spec.c_gamma,
        z_dist=spec.z_dist,
        replications=len(outcomes),
        failures=failures,
        true_cate=true_cate,
        wall_time=wall_time,
    )
    if not succeeded:
        return CellRow(**row)

    truths = np.array(
        [true_cate if o.true_cate is None else o.true_cate for o in succeeded]
    )
    cates = np.array([o.cate for o in succeeded])
    lows = np.array([o.ci[0] for o in succeeded])
    highs = np.array([o.ci[1] for o in succeeded])
    votes = [o.passed for o in succeeded if o.passed is not None]

    row.update(
        MAE=float(np.median(np.abs(cates - truths))),
        COV=float(np.mean((lows <= truths) & (truths <= highs))),
        SE=float(np.mean([o.boot_se for o in succeeded])),
        MT=float(np.mean(votes)) if votes else None,
        dropped_mean=float(np.mean([o.dropped_points for o in succeeded])),
    )
    return CellRow(**row)


class SimulationService:
    def __init__(
        self,
        config: Optional[SpotIVConfig] = None,
        threads: Optional[int] = None,
        estimator_options: Optional[Dict[str, Any]] = None,
    ):
        """
        Initialize the simulation service with dependency injection.

        Args:
            config: Configuration instance (uses global config if None)
            threads: Worker processes; capped by config.threads
            estimator_options: Keyword arguments for SpotIVEstimator
        """
        self.config = config or get_config()
        self.threads = min(threads or self.config.threads, self.config.threads)
        self.estimator_options = dict(estimator_options or {})
        self._oracle_cache: Dict[tuple, float] = {}

    def cell_truth(self, spec: ScenarioSpec, point: EvalPoint, n_mc: int) -> float:
        """Oracle CATE of a fixed-design cell, computed once per cell."""
        key = (
            tuple(spec.cell_key().items()),
            spec.seed,
            spec.overrides.model_dump_json() if spec.overrides else None,
            point.d,
            point.d_prime,
            tuple(point.w.tolist()),
            n_mc,
        )
        if key not in self._oracle_cache:
            self._oracle_cache[key] = true_cate_oracle(
                spec, point, n_mc, params=scenario_params(spec)
            )
        return self._oracle_cache[key]

    async def _run_replications(
        self,
        spec: ScenarioSpec,
        point: EvalPoint,
        replications: int,
        n_boot: int,
        alpha: float,
        per_replication_n_mc: Optional[int],
    ) -> List[ReplicationOutcome]:
        args = (n_boot, alpha, self.estimator_options, self.config, per_replication_n_mc)
        workers = min(self.threads, replications)
        if workers <= 1:
            return [
                run_replication(spec, point, r, *args) for r in range(replications)
            ]

        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                loop.run_in_executor(pool, run_replication, spec, point, r, *args)
                for r in range(replications)
            ]
            # gather keeps submission order
            return list(await asyncio.gather(*futures))

    async def run_cell(
        self,
        spec: ScenarioSpec,
        point: EvalPoint,
        replications: Optional[int] = None,
        n_boot: Optional[int] = None,
        alpha: Optional[float] = None,
        oracle_n_mc: Optional[int] = None,
    ) -> CellRow:
        replications = replications or self.config.replications
        n_boot = n_boot or self.config.n_boot
        alpha = self.config.alpha if alpha is None else alpha
        oracle_n_mc = oracle_n_mc or self.config.oracle_n_mc

        start_time = time.time()
        random_design = spec.scenario == Scenario.VIOLATION_B
        true_cate = None if random_design else self.cell_truth(spec, point, oracle_n_mc)

        logger.info(
            f"Running {replications} replications with "
            f"{min(self.threads, replications)} workers",
            extra={**spec.cell_key(), "seed": spec.seed},
        )
        outcomes = await self._run_replications(
            spec,
            point,
            replications,
            n_boot,
            alpha,
            oracle_n_mc if random_design else None,
        )

        failed = [o for o in outcomes if o.failed]
        for outcome in failed:
            logger.warning(
                f"Replication {outcome.replication} failed: {outcome.error}",
                extra={"error_code": outcome.error_code, **spec.cell_key()},
            )
        if len(failed) > self.config.max_failure_rate * replications:
            error = SimulationError(
                f"{len(failed)} of {replications} replications failed "
                f"(limit {self.config.max_failure_rate:.0%}); "
                f"first error: {failed[0].error}"
            )
            log_error_with_context(logger, error, spec.cell_key())
            raise error

        wall_time = time.time() - start_time
        row = summarize_cell(spec, outcomes, true_cate, wall_time)
        log_performance(
            logger,
            "simulation_cell",
            wall_time,
            **spec.cell_key(),
            replications=replications,
            failures=len(failed),
        )
        return row

    async def run_simulation(
        self,
        specs: Sequence[ScenarioSpec],
        point: EvalPoint,
        replications: Optional[int] = None,
        n_boot: Optional[int] = None,
        alpha: Optional[float] = None,
        oracle_n_mc: Optional[int] = None,
    ) -> SimulationReport:
        """One row per scenario cell, cells run in the order given."""
        n_boot = n_boot or self.config.n_boot
        alpha = self.config.alpha if alpha is None else alpha
        oracle_n_mc = oracle_n_mc or self.config.oracle_n_mc
        rows = []
        for spec in specs:
            rows.append(
                await self.run_cell(spec, point, replications, n_boot, alpha, oracle_n_mc)
            )
        first = specs[0] if specs else ScenarioSpec()
        return SimulationReport(
            rows=rows,
            seed=first.seed,
            n_boot=n_boot,
            alpha=alpha,
            c0=self.estimator_options.get("c0") or self.config.c0,
            n_slices=self.estimator_options.get("n_slices") or self.config.n_slices,
            oracle_n_mc=oracle_n_mc,
            eval=EvalPointSpec(**point.to_dict()),
        )

