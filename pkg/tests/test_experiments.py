import json
import math

import pytest

import main
from specflow import (
    ConfigError,
    ExperimentName,
    default_config,
    estimator_flow,
    exact_flow,
    resolve_config,
    run_chs_checks,
    run_contact_sweep,
    run_estimator_check,
    run_experiment,
    run_heat_checks,
    run_winding,
)
from specflow.experiments import CONTACT_THETA, contact_cutoff, contact_path
from specflow.heat import min_admissible_t


# Configuration


def test_default_configs():
    config = default_config("winding")
    assert config.n == 1 and config.s_grid == 129 and config.hol == [0.5]
    assert default_config(ExperimentName.CHS_CHECK).K == 4
    with pytest.raises(ConfigError):
        default_config("bogus")


def test_resolve_config_merges_overrides(tmp_path):
    config = resolve_config("winding", {"K": 6, "windings": [1]}, out_dir=str(tmp_path), seed=9)
    assert config.K == 6
    assert config.s_grid == 129
    assert config.windings == [1]
    assert config.out_dir == str(tmp_path)
    assert config.seed == 9

    heat = resolve_config("heat-check", {"heat": {"K_contact": 16}})
    assert heat.heat.K_contact == 16
    assert heat.heat.K_free_1 == 128


def test_resolve_config_rejects_invalid_documents():
    with pytest.raises(ConfigError):
        resolve_config("winding", {"n": 3})
    with pytest.raises(ConfigError):
        resolve_config("winding", {"experiment": "chs-check"})
    with pytest.raises(ConfigError):
        resolve_config("contact-sweep", {"unknown": 1})
    with pytest.raises(ConfigError):
        resolve_config("heat-check", {"heat": {"t_grid": [0.1, -0.1]}})


def test_contact_cutoff_grows_with_r():
    assert contact_cutoff(4.0) == 11
    assert contact_cutoff(16.0, 8) == 26
    assert contact_cutoff(0.5, 12) == 12


# Runners


def test_chs_checks_pass(tmp_path):
    report = run_chs_checks(resolve_config("chs-check", out_dir=str(tmp_path)))
    assert report.passed, report.failures
    assert report.summary["checks"] > 0
    table = tmp_path / "chs-check" / "chs_checks.csv"
    lines = table.read_text().splitlines()
    assert lines[0].startswith("# units:")
    assert lines[1] == "check,case,deviation,tolerance,passed"
    summary = json.loads((tmp_path / "chs-check" / "summary.json").read_text())
    assert summary["passed"] is True
    assert "resolved-config.json" in summary["files"]


def test_small_winding_run(tmp_path):
    config = resolve_config("winding", {"windings": [-1, 2], "K": 6, "s_grid": 65}, out_dir=str(tmp_path))
    report = run_winding(config)
    assert report.passed, report.failures
    assert report.summary["flows"] == [-1, 2]
    assert {"wp_m-1.csv", "wp_m2.csv", "winding.csv"} <= set(report.files)


def test_single_point_contact_sweep(tmp_path):
    overrides = {"r_sweep": [1.0], "K": 6, "s_grid": 17, "auto_cutoff": False}
    report = run_contact_sweep(resolve_config("contact-sweep", overrides, out_dir=str(tmp_path)))
    # one r cannot fit a slope
    assert len(report.failures) == 1
    assert "slope undefined" in report.failures[0]
    assert report.summary["r"] == [1.0]
    assert report.summary["leading_slope"] is None
    lines = (tmp_path / "contact-sweep" / "contact_sweep.csv").read_text().splitlines()
    assert lines[1].startswith("r,K,f,prediction,leading_order")
    row = lines[2].split(",")
    assert float(row[3]) == pytest.approx(-1 / (16 * math.pi), rel=1e-9)
    assert float(row[4]) == pytest.approx(float(row[3]), rel=1e-9)


def test_contact_path_at_r4_has_one_downward_crossing():
    # for r < 15 only the zero transverse momentum block reaches zero
    flow = exact_flow(contact_path(4.0, contact_cutoff(4.0), 33, CONTACT_THETA))
    assert flow.f == -1
    assert any(c.sign == -1 for c in flow.crossings)


@pytest.mark.parametrize("r", [4.0, 8.0])
def test_contact_estimator_within_certificate(r):
    path = contact_path(r, contact_cutoff(r), 33, CONTACT_THETA)
    flow = exact_flow(path)
    estimate = estimator_flow(path)
    assert estimate.n_bound >= 1
    assert abs(estimate.value - flow.f) <= estimate.n_bound


@pytest.mark.slow
def test_default_contact_sweep_slope(tmp_path):
    report = run_contact_sweep(resolve_config("contact-sweep", out_dir=str(tmp_path)))
    assert report.passed, report.failures
    assert report.summary["f"] == [-1, -1, -1, -1, -5]
    assert 1.8 <= report.summary["f_slope"] <= 2.2
    trend = report.summary["relative_error"]
    assert trend["largest_r"] < trend["smallest_r"]


def test_estimator_check_on_one_winding(tmp_path):
    config = resolve_config("estimator-check", {"windings": [1], "r_sweep": []}, out_dir=str(tmp_path))
    report = run_estimator_check(config)
    assert report.passed, report.failures
    assert (tmp_path / "estimator-check" / "estimator_check.csv").exists()


SMALL_HEAT = {
    "K_free_1": 32,
    "K_free_3": 8,
    "K_contact": 16,
    "points_per_axis": 4,
    "t_grid": [0.3, 0.25, 0.06],
    "oracle_t_grid": [0.02],
    "lambda_grid": [1.0, 5.0, 10.0],
}


def test_small_heat_checks(tmp_path):
    report = run_heat_checks(resolve_config("heat-check", {"heat": SMALL_HEAT}, out_dir=str(tmp_path)))
    assert report.passed, report.failures
    assert report.summary["contact"]["admissible_t"] == [0.06]
    assert report.summary["contact"]["pointwise_slope"] is None
    assert 0.0 <= report.summary["contact"]["residual_constant"] < math.inf
    assert report.summary["free-1"]["residual_constant"] >= 0.0
    for name in ("heat_trace.csv", "counts.csv", "p_lambda.csv", "certificates.csv", "pointwise.csv"):
        assert name in report.files
    traces = (tmp_path / "heat-check" / "heat_trace.csv").read_text()
    assert "free-3-separable,0.02," in traces
    summary = json.loads((tmp_path / "heat-check" / "summary.json").read_text())
    assert summary["summary"]["contact"]["residual_constant"] == report.summary["contact"]["residual_constant"]
    header = (tmp_path / "heat-check" / "p_lambda.csv").read_text().splitlines()[1]
    assert header == "connection,t,lambda,p,density,residual,envelope,count"


def test_uncertified_oracle_t_fails_the_report(tmp_path):
    settings = dict(SMALL_HEAT, oracle_t_grid=[0.02, 0.001])
    report = run_heat_checks(resolve_config("heat-check", {"heat": settings}, out_dir=str(tmp_path)))
    assert not report.passed
    missed = [f for f in report.failures if "oracle t=0.001" in f]
    assert len(missed) == 2
    assert any(f.startswith("free T^3") for f in missed)


def test_default_heat_settings_cover_the_oracle_grid():
    settings = default_config("heat-check").heat
    assert settings.points_per_axis == 16
    circle_t_min = min_admissible_t(2 * math.pi * settings.K_free_1 / 4)
    assert all(t >= circle_t_min for t in settings.oracle_t_grid)


def test_run_experiment_dispatches(tmp_path):
    report = run_experiment(resolve_config("chs-check", {"windings": [1]}, out_dir=str(tmp_path)))
    assert report.experiment == ExperimentName.CHS_CHECK


# Command line


def test_cli_runs_chs_check(tmp_path):
    assert main.main(["chs-check", "--out", str(tmp_path), "--threads", "2"]) == 0
    assert (tmp_path / "chs-check" / "summary.json").exists()


def test_cli_reports_config_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main.main(["winding", "--config", str(bad), "--out", str(tmp_path)]) == 4
    assert main.main(["winding", "--config", str(tmp_path / "missing.json")]) == 4

    wrong = tmp_path / "wrong.json"
    wrong.write_text(json.dumps({"n": 3}))
    assert main.main(["winding", "--config", str(wrong), "--out", str(tmp_path)]) == 4


def test_cli_rejects_out_of_range_seed(tmp_path):
    assert main.main(["chs-check", "--seed", str(2**64), "--out", str(tmp_path)]) == 4


def test_out_dir_from_environment(monkeypatch):
    monkeypatch.setenv("SPECFLOW_OUT_DIR", '"custom-results"')
    assert main.get_out_dir() == "custom-results"
    monkeypatch.delenv("SPECFLOW_OUT_DIR")
    assert main.get_out_dir() == "results"
