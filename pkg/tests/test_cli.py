import json
from pathlib import Path

import pytest

import eventfdi as ef
from eventfdi.cli import main

REPO = Path(__file__).resolve().parents[1]
SCENARIO = str(REPO / "scenarios" / "paper_sec5.json")


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def small_config_file(tmp_path, **overrides):
    payload = ef.paper_scenario(steps=260, trajectories=2, **overrides)
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(payload))
    return str(path)


class TestSolve:
    def test_paper_values(self, capsys):
        code, out, _ = run_cli(
            capsys,
            "solve",
            "--beta", "1.4",
            "--sigma", "11.34",
            "--upsilon", "0.01",
            "--target-M", "0.99865",
            "--dof", "3",
        )
        assert code == 0
        payload = json.loads(out)
        assert payload["mu_star"] == pytest.approx(2.7705, abs=5e-3)
        assert payload["delta_bar_star"] == pytest.approx(2.4828, abs=5e-3)
        assert payload["marcum_residual"] < 1e-9
        assert payload["trigger_residual"] < 1e-9

    def test_feasible_interval_report(self, capsys):
        code, out, _ = run_cli(
            capsys,
            "solve",
            "--beta", "1.4",
            "--sigma", "11.34",
            "--upsilon", "0.01",
            "--target-M", "0.99865",
            "--dof", "3",
            "--mu", "5.0",
        )
        assert code == 0
        payload = json.loads(out)
        band = payload["feasible_delta"]
        assert band["low"] < band["high"]

    def test_infeasible_geometry_is_validation_error(self, capsys):
        code, _, err = run_cli(
            capsys,
            "solve",
            "--beta", "4.0",
            "--sigma", "11.34",
            "--upsilon", "0.01",
            "--target-M", "0.99865",
            "--dof", "3",
        )
        assert code == 1
        assert "sqrt(sigma)" in err

    def test_unknown_flag_exits_1(self, capsys):
        code, _, err = run_cli(capsys, "solve", "--bogus", "1")
        assert code == 1
        assert "usage" in err


class TestSimulate:
    def test_runs_shipped_scenario_with_overrides(self, capsys, tmp_path):
        config = small_config_file(tmp_path)
        code, out, _ = run_cli(capsys, "simulate", "--config", config, "--attack", "off")
        assert code == 0
        payload = json.loads(out)
        assert payload["trajectory_count"] == 2
        assert 0.0 <= payload["comm_rate"] <= 1.0

    def test_deterministic_summaries(self, capsys, tmp_path):
        config = small_config_file(tmp_path)
        args = ("simulate", "--config", config, "--attack", "off", "--seed", "7")
        code1, out1, _ = run_cli(capsys, *args)
        code2, out2, _ = run_cli(capsys, *args)
        assert code1 == code2 == 0
        assert out1 == out2

    def test_writes_trace_and_summary(self, capsys, tmp_path):
        config = small_config_file(tmp_path)
        trace = tmp_path / "trace.csv"
        out_file = tmp_path / "summary.json"
        code, out, _ = run_cli(
            capsys, "simulate", "--config", config,
            "--trace", str(trace), "--out", str(out_file),
        )
        assert code == 0
        assert trace.read_text().splitlines()[0] == ef.trace_header(3, 2)
        assert json.loads(out_file.read_text()) == json.loads(out)

    def test_missing_config_is_validation_error(self, capsys, tmp_path):
        code, _, err = run_cli(capsys, "simulate", "--config", str(tmp_path / "nope.json"))
        assert code == 1
        assert "error" in err


class TestAnalyze:
    def test_open_loop_trace_at_large_mu(self, capsys):
        code, out, _ = run_cli(capsys, "analyze", "--config", SCENARIO, "--mu", "10000")
        assert code == 0
        payload = json.loads(out)
        assert payload["open_loop_cov_trace"] == pytest.approx(0.0915, abs=1e-3)
        assert payload["attacked_cov_trace"] == pytest.approx(
            payload["open_loop_cov_trace"], abs=1e-3
        )

    def test_default_params_report_bias(self, capsys):
        code, out, _ = run_cli(capsys, "analyze", "--config", SCENARIO)
        assert code == 0
        payload = json.loads(out)
        assert payload["mu"] == pytest.approx(2.7705, abs=5e-3)
        assert len(payload["bias"]) == 3


class TestSweep:
    def test_csv_output(self, capsys, tmp_path):
        out_path = tmp_path / "sweep.csv"
        code, _, _ = run_cli(
            capsys, "sweep", "--config", SCENARIO,
            "--mu-grid", "1,2,5,10000", "--out", str(out_path),
        )
        assert code == 0
        lines = out_path.read_text().splitlines()
        assert lines[0] == "mu,trace"
        traces = [float(line.split(",")[1]) for line in lines[1:]]
        assert traces == sorted(traces)
        assert traces[-1] == pytest.approx(0.0915, abs=1e-3)

    def test_stdout_default(self, capsys):
        code, out, _ = run_cli(capsys, "sweep", "--config", SCENARIO, "--mu-grid", "1,2")
        assert code == 0
        assert out.splitlines()[0] == "mu,trace"


class TestReproducePaper:
    def test_quick_budget_passes(self, capsys):
        code, out, _ = run_cli(capsys, "reproduce-paper", "--quick")
        assert code == 0, out
        table = out.splitlines()
        assert any(line.startswith("PASS  scaling mu*") for line in table)
        assert any(line.startswith("NOTE  published attacked rate") for line in table)
        assert not any(line.startswith("FAIL") for line in table)
