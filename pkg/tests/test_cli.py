"""
Tests for the command-line entry point.
"""

import asyncio
import json
from pathlib import Path

import pytest

from spotiv import cli
from spotiv.config import get_config, reload_config
from spotiv.models import RunMode, default_eval_point
from spotiv.services.data_io import read_csv_dataset, read_report
from spotiv.services.estimator import SpotIVEstimator


SHIPPED_CSV = Path(__file__).parent / "data" / "sample_binary_i.csv"


@pytest.fixture(autouse=True)
def small_oracle(monkeypatch):
    monkeypatch.setenv("SPOTIV_ORACLE_N_MC", "2000")
    monkeypatch.setenv("SPOTIV_THREADS", "1")
    reload_config()
    yield
    monkeypatch.undo()
    reload_config()


@pytest.fixture
def sample_csv(tmp_path):
    path = tmp_path / "sample.csv"
    code = cli.main(
        ["--mode", "generate", "--scenario", "binary_i", "--n", "300", "--seed", "7", "--out", str(path)]
    )
    assert code == cli.EXIT_OK
    return path


class TestConfigFromArgs:
    def parse(self, argv):
        return cli.config_from_args(cli.build_parser().parse_args(argv))

    def test_grid_flags(self):
        run = self.parse(
            ["--mode", "simulate", "--scenario", "binary_i", "--n", "500", "1000", "--c-gamma", "0.4"]
        )
        assert run.mode == RunMode.SIMULATE
        assert [(c.n, c.c_gamma) for c in run.scenario_cells()] == [(500, 0.4), (1000, 0.4)]

    def test_flags_override_config_file(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text(
            json.dumps({"mode": "simulate", "n_boot": 20, "scenario": {"scenario": "violation_a", "n": 800}})
        )
        run = self.parse(["--config", str(path), "--n-boot", "30", "--seed", "4"])
        assert run.n_boot == 30
        assert run.scenario.n == 800
        assert run.scenario.seed == 4

    def test_unreadable_config(self, tmp_path):
        path = tmp_path / "run.json"
        path.write_text("{not json")
        with pytest.raises(cli.InputError):
            self.parse(["--config", str(path)])


class TestMain:
    def test_generate_to_stdout(self, capsys):
        code = cli.main(["--mode", "generate", "--scenario", "binary_i", "--n", "20"])
        assert code == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert lines[0] == "y,d,z1,z2,z3,z4,z5,z6,z7"
        assert len(lines) == 21

    def test_estimate_matches_library(self, sample_csv, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main(
            ["--input", str(sample_csv), "--n-boot", "3", "--seed", "7", "--out", str(out)]
        )
        assert code == cli.EXIT_OK
        report = asyncio.run(read_report(out))

        data = read_csv_dataset(sample_csv)
        _, result, test = SpotIVEstimator(config=get_config()).run(
            data, default_eval_point(7), n_boot=3, seed=7
        )
        assert report.cate["cate"] == result.cate
        assert report.cate["boot_se"] == result.boot_se
        assert report.majority_test["passed"] == test.passed
        assert report.S_hat == [f"z{j + 1}" for j in range(7)]

    def test_estimate_csv_row(self, sample_csv, capsys):
        code = cli.main(["--input", str(sample_csv), "--n-boot", "3", "--format", "csv"])
        assert code == cli.EXIT_OK
        header = capsys.readouterr().out.splitlines()[0].split(",")
        assert {"cate", "boot_se", "ci_low", "ci_high", "majority_passed"} <= set(header)

    def test_majority_test_on_scenario(self, capsys):
        code = cli.main(["--mode", "majority-test", "--scenario", "binary_i", "--n", "500"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert "passed" in payload["majority_test"]
        assert "cate" not in payload

    def test_simulate_csv(self, capsys):
        code = cli.main(
            [
                "--mode", "simulate", "--scenario", "binary_i", "--n", "300",
                "--reps", "1", "--n-boot", "3", "--format", "csv",
            ]
        )
        assert code == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2
        assert "wall_time" not in lines[0]

    def test_oracle(self, capsys):
        code = cli.main(["--mode", "oracle", "--scenario", "binary_i", "--c-gamma", "0.8"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["phi"]) == len(payload["grid"]) == 13
        assert payload["true_cate"] < 0

    def test_missing_column_exit_code(self, tmp_path, capsys):
        path = tmp_path / "no_d.csv"
        path.write_text("y,z1\n1,2\n0,3\n")
        assert cli.main(["--input", str(path)]) == cli.EXIT_INPUT_ERROR
        err = capsys.readouterr().err
        assert "missing_column" in err
        assert "'d'" in err

    def test_input_and_scenario_exit_code(self, sample_csv, capsys):
        code = cli.main(["--input", str(sample_csv), "--scenario", "binary_i"])
        assert code == cli.EXIT_INPUT_ERROR
        assert "bad_config" in capsys.readouterr().err

    def test_unknown_scenario_exit_code(self):
        code = cli.main(["--mode", "simulate", "--scenario", "binary_iii"])
        assert code == cli.EXIT_INPUT_ERROR

    def test_estimation_failure_exit_code(self, sample_csv, capsys):
        code = cli.main(["--input", str(sample_csv), "--bandwidth", "1e-9", "--n-boot", "3"])
        assert code == cli.EXIT_ESTIMATION_ERROR
        assert "bandwidth_too_small" in capsys.readouterr().err

    def test_shipped_sample(self):
        data = read_csv_dataset(SHIPPED_CSV)
        assert data.n == 200
        assert data.p_z == 7
        assert data.outcome_kind.value == "binary"

    def test_estimate_on_shipped_sample_matches_library(self, tmp_path):
        out = tmp_path / "report.json"
        code = cli.main(
            ["--input", str(SHIPPED_CSV), "--n-boot", "3", "--seed", "2", "--out", str(out)]
        )
        assert code == cli.EXIT_OK
        report = asyncio.run(read_report(out))

        data = read_csv_dataset(SHIPPED_CSV)
        _, result, _ = SpotIVEstimator(config=get_config()).run(
            data, default_eval_point(7), n_boot=3, seed=2
        )
        assert report.n == 200
        assert report.cate["cate"] == result.cate
        assert report.cate["ci"] == list(result.ci)

    def test_weights_exported_on_request(self, sample_csv, capsys):
        code = cli.main(["--input", str(sample_csv), "--n-boot", "3", "--weights"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert len(payload["cate"]["weights_a"]) == payload["n"]
        assert len(payload["cate"]["weights_c"]) == payload["n"]

    def test_weights_left_out_by_default(self, sample_csv, capsys):
        code = cli.main(["--input", str(sample_csv), "--n-boot", "3"])
        assert code == cli.EXIT_OK
        payload = json.loads(capsys.readouterr().out)
        assert "weights_a" not in payload["cate"]
        assert "weights_c" not in payload["cate"]

    def test_input_error_logged_without_traceback(self, tmp_path, capsys):
        path = tmp_path / "no_d.csv"
        path.write_text("y,z1\n1,2\n0,3\n")
        assert cli.main(["--input", str(path)]) == cli.EXIT_INPUT_ERROR
        assert "Traceback" not in capsys.readouterr().err
