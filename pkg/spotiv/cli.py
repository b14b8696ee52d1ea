"""
Command-line entry point.

    spotiv --mode estimate --input sample.csv --pz 7 --n-boot 50
    spotiv --mode simulate --scenario binary_i --n 500 1000 --c-gamma 0.4 0.8
    spotiv --mode majority-test --scenario violation_a --n 1000 --c-gamma 0.6
    spotiv --mode generate --scenario binary_i --n 200 --seed 7 --out sample.csv
    spotiv --mode oracle --scenario binary_i --c-gamma 0.8

Exit codes: 0 success, 2 input error, 3 estimation failure.
"""

import argparse
import asyncio
import json
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError

from spotiv.config import SpotIVConfig, get_config
from spotiv.errors import EstimationError, InputError
from spotiv.logging_config import get_logger, log_error_with_context, setup_logging
from spotiv.models import (
    Dataset,
    EstimateReport,
    EvalPointSpec,
    MajorityTestReport,
    OracleReport,
    OutcomeKind,
    RunConfig,
    RunMode,
    SimulationReport,
)
from spotiv.services.data_io import (
    dataset_frame,
    read_csv_dataset,
    render_report,
    write_csv_dataset,
    write_report,
)
from spotiv.services.dgp import generate, scenario_params, true_cate_oracle, true_phi_curve
from spotiv.services.estimator import SpotIVEstimator
from spotiv.services.simulation_service import SimulationService

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 2
EXIT_ESTIMATION_ERROR = 3

# argparse dest -> RunConfig field
_RUN_FIELDS = {
    "mode": "mode",
    "input": "input",
    "pz": "pz",
    "outcome_kind": "outcome_kind",
    "eval_preset": "eval",
    "reps": "replications",
    "n_boot": "n_boot",
    "alpha": "alpha",
    "c0": "c0",
    "n_slices": "n_slices",
    "bandwidth": "bandwidth",
    "p_hat_source": "p_hat_source",
    "seed": "seed",
    "out": "out",
    "format": "format",
    "threads": "threads",
}
_SCENARIO_FIELDS = {"scenario": "scenario", "z_dist": "z_dist"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spotiv",
        description="CATE estimation with possibly invalid instruments",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument(
        "--mode",
        choices=[m.value for m in RunMode],
        help="What to run (default: estimate)",
    )
    parser.add_argument("--config", help="JSON file holding a full run configuration")
    parser.add_argument("--input", help="CSV with header y,d,z1..,x1..")
    parser.add_argument("--pz", type=int, help="Number of candidate IV columns")
    parser.add_argument(
        "--outcome-kind",
        choices=[k.value for k in OutcomeKind],
        help="Outcome type (inferred from y when omitted)",
    )
    parser.add_argument("--scenario", help="binary_i, continuous_ii, violation_a, violation_b")
    parser.add_argument("--n", type=int, nargs="+", help="Sample size(s)")
    parser.add_argument("--c-gamma", type=float, nargs="+", help="IV strength(s)")
    parser.add_argument("--z-dist", choices=["normal", "uniform"])
    parser.add_argument("--eval", dest="eval_preset", help="Evaluation point preset")
    parser.add_argument("--reps", type=int, help="Replications per simulation cell")
    parser.add_argument("--n-boot", type=int, help="Bootstrap resamples")
    parser.add_argument("--alpha", type=float, help="CI level is 1 - alpha")
    parser.add_argument("--c0", type=float, help="Rank-selection penalty exponent")
    parser.add_argument("--n-slices", type=int, help="Slices for continuous outcomes")
    parser.add_argument(
        "--bandwidth", type=float, nargs="+", help="Fixed bandwidths (M_hat + 1 values)"
    )
    parser.add_argument("--p-hat-source", choices=["logistic", "kernel"])
    parser.add_argument("--seed", type=int, help="Base seed of every random stream")
    parser.add_argument("--out", help="Output file (stdout when omitted)")
    parser.add_argument("--format", choices=["json", "csv"])
    parser.add_argument("--threads", type=int, help="Worker processes (capped by SPOTIV_THREADS)")
    parser.add_argument("--center", action="store_true", help="Center d and W columns")
    parser.add_argument(
        "--timing", action="store_true", help="Include wall_time in simulation reports"
    )
    parser.add_argument(
        "--weights",
        action="store_true",
        help="Include the partial-mean weight vectors in estimate reports",
    )
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Merge a --config file with the flags; explicit flags win."""
    payload: Dict[str, Any] = {}
    if args.config:
        try:
            with open(args.config) as f:
                payload = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise InputError(f"cannot read config {args.config}: {e}", code="bad_config")

    for dest, field in _RUN_FIELDS.items():
        value = getattr(args, dest)
        if value is not None:
            payload[field] = value
    if args.center:
        payload["center"] = True
    if args.timing:
        payload["timing"] = True
    if args.weights:
        payload["weights"] = True

    scenario = dict(payload.get("scenario") or {})
    for dest, field in _SCENARIO_FIELDS.items():
        value = getattr(args, dest)
        if value is not None:
            scenario[field] = value
    if args.n:
        scenario["n"] = args.n[0]
        if len(args.n) > 1:
            payload["n_grid"] = args.n
    if args.c_gamma:
        scenario["c_gamma"] = args.c_gamma[0]
        if len(args.c_gamma) > 1:
            payload["c_gamma_grid"] = args.c_gamma
    if args.seed is not None and scenario:
        scenario["seed"] = args.seed
    if scenario:
        payload["scenario"] = scenario

    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        raise InputError(f"invalid run configuration: {e}", code="bad_config") from e


def _estimator(run: RunConfig, config: SpotIVConfig) -> SpotIVEstimator:
    return SpotIVEstimator(
        config=config,
        c0=run.c0,
        n_slices=run.n_slices,
        bandwidth=run.bandwidth,
        p_hat_source=run.p_hat_source,
    )


def load_dataset(run: RunConfig) -> Dataset:
    """The CSV sample, or replication 0 of the scenario."""
    if run.input is not None:
        kind = OutcomeKind(run.outcome_kind) if run.outcome_kind else None
        return read_csv_dataset(run.input, run.pz, kind, center=run.center)
    data, _ = generate(run.scenario, 0)
    return data.centered() if run.center else data


def _resolve_eval(run: RunConfig, p: int):
    try:
        return run.resolve_eval(p)
    except ValueError as e:
        raise InputError(str(e), code="dimension_mismatch", stage="input") from e


def run_estimate(run: RunConfig, config: Optional[SpotIVConfig] = None) -> EstimateReport:
    """Full pipeline on one sample: fit, CATE with bootstrap CI, voting test."""
    config = config or get_config()
    data = load_dataset(run)
    point = _resolve_eval(run, data.p)
    estimator = _estimator(run, config)
    fit, result, test = estimator.run(
        data, point, n_boot=run.n_boot, alpha=run.alpha, seed=run.seed
    )
    names = data.names
    return EstimateReport(
        n=data.n,
        p=data.p,
        p_z=data.p_z,
        outcome_kind=data.outcome_kind.value,
        columns=names,
        gamma_hat=fit.first_stage.gamma_hat.tolist(),
        sigma_v_hat=fit.first_stage.sigma_v_hat,
        S_hat=[names[j] for j in fit.first_stage.S_hat],
        M_hat=fit.sir.M_hat,
        eigenvalues=fit.sir.eigenvalues.tolist(),
        b_hat=fit.structural.b_hat.tolist(),
        B_hat=fit.structural.B_hat.tolist(),
        bandwidths=fit.kernel.bandwidths.tolist(),
        eval=EvalPointSpec(**point.to_dict()),
        cate=result.to_report(include_weights=run.weights),
        majority_test=None if test is None else test.to_report(names),
        warnings=fit.warnings,
    )


def run_majority_test(
    run: RunConfig, config: Optional[SpotIVConfig] = None
) -> MajorityTestReport:
    config = config or get_config()
    data = load_dataset(run)
    estimator = _estimator(run, config)
    fit = estimator.fit(data)
    test = estimator.majority_test(data, fit)
    names = data.names
    return MajorityTestReport(
        n=data.n,
        p_z=data.p_z,
        columns=names,
        gamma_hat=fit.first_stage.gamma_hat.tolist(),
        S_hat=[names[j] for j in fit.first_stage.S_hat],
        M_hat=fit.sir.M_hat,
        majority_test=test.to_report(names),
        warnings=fit.warnings,
    )


async def run_simulation(
    run: RunConfig, config: Optional[SpotIVConfig] = None
) -> SimulationReport:
    config = config or get_config()
    cells = run.scenario_cells()
    point = _resolve_eval(run, scenario_params(cells[0]).gamma.size)
    service = SimulationService(
        config=config,
        threads=run.threads,
        estimator_options={
            "c0": run.c0,
            "n_slices": run.n_slices,
            "bandwidth": run.bandwidth,
            "p_hat_source": run.p_hat_source,
        },
    )
    return await service.run_simulation(
        cells, point, replications=run.replications, n_boot=run.n_boot, alpha=run.alpha
    )


def run_oracle(run: RunConfig, config: Optional[SpotIVConfig] = None) -> OracleReport:
    config = config or get_config()
    spec = run.scenario
    params = scenario_params(spec)
    point = _resolve_eval(run, params.gamma.size)
    n_mc = config.oracle_n_mc
    return OracleReport(
        scenario=spec.scenario,
        c_gamma=spec.c_gamma,
        seed=spec.seed,
        n_mc=n_mc,
        eval=EvalPointSpec(**point.to_dict()),
        true_cate=true_cate_oracle(spec, point, n_mc, params=params),
        grid=list(run.oracle_grid),
        phi=true_phi_curve(spec, run.oracle_grid, point.w, n_mc, params=params).tolist(),
    )


def run_generate(run: RunConfig) -> Dataset:
    data, _ = generate(run.scenario, 0)
    if run.out:
        write_csv_dataset(data, run.out)
        logger.info(f"Sample written to {run.out}")
    return data


async def _emit(report, run: RunConfig) -> None:
    if run.out:
        await write_report(report, run.out, run.format, timing=run.timing)
    else:
        sys.stdout.write(render_report(report, run.format, timing=run.timing))


async def dispatch(run: RunConfig, config: Optional[SpotIVConfig] = None) -> None:
    config = config or get_config()
    if run.mode == RunMode.ESTIMATE:
        await _emit(run_estimate(run, config), run)
    elif run.mode == RunMode.MAJORITY_TEST:
        await _emit(run_majority_test(run, config), run)
    elif run.mode == RunMode.SIMULATE:
        await _emit(await run_simulation(run, config), run)
    elif run.mode == RunMode.ORACLE:
        await _emit(run_oracle(run, config), run)
    else:
        data = run_generate(run)
        if not run.out:
            sys.stdout.write(dataset_frame(data).to_csv(index=False))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging()
    try:
        run = config_from_args(args)
        asyncio.run(dispatch(run))
    except InputError as e:
        log_error_with_context(logger, e, {"argv": argv})
        print(f"error [{e.stage}/{e.code}]: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    except EstimationError as e:
        log_error_with_context(logger, e, {"argv": argv})
        print(f"estimation failed [{e.stage}/{e.code}]: {e}", file=sys.stderr)
        return EXIT_ESTIMATION_ERROR
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
