"""
Tests for the Monte Carlo harness.
"""

import pytest

from spotiv.config import SpotIVConfig
from spotiv.models import (
    ReplicationOutcome,
    Scenario,
    ScenarioSpec,
    default_eval_point,
)
from spotiv.services import simulation_service
from spotiv.services.data_io import render_report
from spotiv.services.simulation_service import (
    SimulationError,
    SimulationService,
    run_replication,
    summarize_cell,
)


@pytest.fixture
def config():
    return SpotIVConfig(threads=1, n_boot=3, oracle_n_mc=2000, max_failure_rate=0.05)


@pytest.fixture
def spec():
    return ScenarioSpec(n=300, c_gamma=0.8, seed=5)


@pytest.fixture
def point():
    return default_eval_point(7)


def outcome(replication, cate, low, high, passed=True, se=0.1, truth=None):
    return ReplicationOutcome(
        replication=replication,
        cate=cate,
        boot_se=se,
        ci=[low, high],
        dropped_points=replication,
        passed=passed,
        true_cate=truth,
    )


class TestSummarizeCell:
    def test_table_columns(self, spec):
        outcomes = [
            outcome(0, 0.1, -0.1, 0.3, passed=True, se=0.1),
            outcome(1, 0.4, 0.3, 0.5, passed=False, se=0.2),
            outcome(2, -0.3, -0.5, 0.1, passed=True, se=0.3),
        ]
        row = summarize_cell(spec, outcomes, true_cate=0.0)
        # absolute errors 0.1, 0.4, 0.3
        assert row.MAE == pytest.approx(0.3)
        assert row.COV == pytest.approx(2 / 3)
        assert row.SE == pytest.approx(0.2)
        assert row.MT == pytest.approx(2 / 3)
        assert row.dropped_mean == pytest.approx(1.0)
        assert row.replications == 3
        assert row.failures == 0

    def test_failures_are_excluded(self, spec):
        outcomes = [
            outcome(0, 0.2, 0.0, 0.4),
            ReplicationOutcome(replication=1, error="boom", error_code="x"),
        ]
        row = summarize_cell(spec, outcomes, true_cate=0.2)
        assert row.failures == 1
        assert row.MAE == 0.0
        assert row.COV == 1.0

    def test_all_failed(self, spec):
        row = summarize_cell(
            spec, [ReplicationOutcome(replication=0, error="boom")], true_cate=0.0
        )
        assert row.MAE is None and row.COV is None and row.MT is None

    def test_no_votes_for_continuous(self, spec):
        row = summarize_cell(spec, [outcome(0, 0.0, -1.0, 1.0, passed=None)], 0.0)
        assert row.MT is None

    def test_per_replication_truth(self, spec):
        outcomes = [outcome(0, 0.5, 0.4, 0.6, truth=0.5), outcome(1, 0.5, 0.4, 0.6, truth=1.0)]
        row = summarize_cell(spec, outcomes, true_cate=None)
        assert row.MAE == pytest.approx(0.25)
        assert row.COV == pytest.approx(0.5)


class TestRunReplication:
    def test_deterministic(self, spec, point, config):
        first = run_replication(spec, point, 1, 3, 0.05, {}, config)
        second = run_replication(spec, point, 1, 3, 0.05, {}, config)
        assert first == second
        assert not first.failed
        assert first.passed is not None

    def test_errors_are_captured(self, spec, point, config):
        result = run_replication(spec, point, 0, 3, 0.05, {"bandwidth": [1e-9]}, config)
        assert result.failed
        assert result.error_code == "bandwidth_too_small"

    def test_random_design_scored_per_replication(self, point, config):
        spec = ScenarioSpec(scenario=Scenario.VIOLATION_B, n=300, c_gamma=0.8, seed=2)
        result = run_replication(spec, point, 0, 3, 0.05, {}, config, oracle_n_mc=2000)
        assert result.true_cate is not None


class TestSimulationService:
    async def test_same_seed_same_report(self, spec, point, config):
        service = SimulationService(config=config)
        first = await service.run_simulation([spec], point, replications=2, oracle_n_mc=2000)
        second = await service.run_simulation([spec], point, replications=2, oracle_n_mc=2000)
        assert render_report(first) == render_report(second)
        assert render_report(first, "csv") == render_report(second, "csv")
        assert "wall_time" not in render_report(first)
        assert first.rows[0].wall_time is not None

    async def test_worker_pool_matches_inline(self, spec, point):
        inline = SimulationService(
            config=SpotIVConfig(threads=1, n_boot=3, oracle_n_mc=2000)
        )
        pooled = SimulationService(
            config=SpotIVConfig(threads=2, n_boot=3, oracle_n_mc=2000)
        )
        a = await inline.run_cell(spec, point, replications=2)
        b = await pooled.run_cell(spec, point, replications=2)
        assert a.model_dump(exclude={"wall_time"}) == b.model_dump(exclude={"wall_time"})

    async def test_rows_follow_cell_order(self, point, config):
        specs = [ScenarioSpec(n=300, c_gamma=c, seed=1) for c in (0.8, 0.6)]
        report = await SimulationService(config=config).run_simulation(
            specs, point, replications=1, oracle_n_mc=2000
        )
        assert [row.c_gamma for row in report.rows] == [0.8, 0.6]
        assert report.seed == 1
        assert report.eval.d == -1.0

    async def test_too_many_failures(self, spec, point, config, monkeypatch):
        def failing(spec, point, replication, *args):
            return ReplicationOutcome(
                replication=replication, error="no estimate", error_code="degenerate"
            )

        monkeypatch.setattr(simulation_service, "run_replication", failing)
        service = SimulationService(config=config)
        with pytest.raises(SimulationError, match="3 of 3 replications failed") as exc:
            await service.run_cell(spec, point, replications=3, oracle_n_mc=2000)
        assert exc.value.code == "too_many_failures"

    def test_oracle_cached_per_cell(self, spec, point, config, monkeypatch):
        calls = []

        def oracle(spec, point, n_mc, params=None):
            calls.append(n_mc)
            return 0.1

        monkeypatch.setattr(simulation_service, "true_cate_oracle", oracle)
        service = SimulationService(config=config)
        assert service.cell_truth(spec, point, 500) == 0.1
        assert service.cell_truth(spec, point, 500) == 0.1
        service.cell_truth(spec.model_copy(update={"n": 600}), point, 500)
        assert calls == [500, 500]

    def test_threads_capped_by_config(self):
        service = SimulationService(config=SpotIVConfig(threads=2), threads=8)
        assert service.threads == 2
