#!/usr/bin/env python3
"""
SpotIV - Simple Usage Examples

Estimates a conditional average treatment effect on simulated data where two
of the seven candidate instruments are invalid, then runs a small Monte Carlo
cell. Everything is seeded, so the numbers repeat run to run.
"""

import asyncio

import numpy as np
from dotenv import load_dotenv

from spotiv import (
    EvalPoint,
    Scenario,
    ScenarioSpec,
    SimulationService,
    SpotIVConfig,
    SpotIVEstimator,
    generate,
    setup_logging,
    true_cate_oracle,
)

# Load environment variables
load_dotenv()


def estimate_example(config: SpotIVConfig):
    """Fit the pipeline on one sample and compare against the oracle."""
    print("📈 Single-Sample Estimate")
    print("=" * 40)

    spec = ScenarioSpec(scenario=Scenario.BINARY_I, n=1000, c_gamma=0.8, seed=42)
    data, params = generate(spec)
    point = EvalPoint(d=-1.0, d_prime=2.0, w=np.r_[np.zeros(6), 0.1])

    estimator = SpotIVEstimator(config=config)
    fit, result, test = estimator.run(data, point, n_boot=20, seed=spec.seed)

    print(f"🔎 Relevant IVs: {[data.names[j] for j in fit.first_stage.S_hat]}")
    print(f"🔎 Valid IVs (truth): {[data.names[j] for j in params.valid_set()]}")
    print(f"📐 M_hat = {fit.sir.M_hat}, b_hat = {np.round(fit.structural.b_hat, 3)}")
    print(f"✅ CATE = {result.cate:.4f} (bootstrap SE {result.boot_se:.4f})")
    print(f"   {1 - result.alpha:.0%} CI: [{result.ci[0]:.4f}, {result.ci[1]:.4f}]")

    truth = true_cate_oracle(spec, point, 200_000)
    print(f"🎯 Oracle CATE = {truth:.4f}")
    if test is not None:
        verdict = "not rejected" if test.passed else "rejected"
        print(f"🗳️  Majority rule {verdict}; votes {test.to_report(data.names)['votes']}")


async def simulation_example(config: SpotIVConfig):
    """A tiny simulation cell: MAE, coverage, mean SE and voting rate."""
    print("\n🧪 Monte Carlo Cell")
    print("=" * 40)

    service = SimulationService(config=config)
    spec = ScenarioSpec(scenario=Scenario.BINARY_I, n=500, c_gamma=0.8, seed=7)
    point = EvalPoint(d=-1.0, d_prime=2.0, w=np.r_[np.zeros(6), 0.1])
    report = await service.run_simulation(
        [spec], point, replications=10, n_boot=10, oracle_n_mc=100_000
    )
    row = report.rows[0]
    print(f"📊 MAE={row.MAE:.4f} COV={row.COV:.2f} SE={row.SE:.4f} MT={row.MT:.2f}")
    print(f"   failures: {row.failures}/{row.replications}")


def main():
    """Main function to run examples."""
    print("🚀 SpotIV Examples")
    print("=" * 50)

    config = SpotIVConfig.load_config()
    setup_logging(config)
    estimate_example(config)
    asyncio.run(simulation_example(config))

    print("\n🎉 All examples completed!")
    print("\n💡 Command line:")
    print(
        """
spotiv --mode generate --scenario binary_i --n 1000 --seed 1 --out sample.csv
spotiv --mode estimate --input tests/data/sample_binary_i.csv --n-boot 50
spotiv --mode simulate --scenario binary_i --n 500 1000 --c-gamma 0.4 0.8 --reps 200 --format csv
    """
    )


if __name__ == "__main__":
    main()
