import json

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from rkdkit.cli import main
from rkdkit.errors import ConfigError
from rkdkit.reports import RunConfig, ingest, parse_kink_rule
from rkdkit.simulation import DgpConfig, generate_dgp


@pytest.fixture()
def data_file(tmp_path):
    sample, _ = generate_dgp(DgpConfig(n=1500, seed=3))
    path = tmp_path / "data.csv"
    pd.DataFrame({"dur": sample.y, "wage": sample.x, "ben": sample.b}).to_csv(path, index=False)
    return path


def test_parse_kink_rule_example():
    design = parse_kink_rule("min(0.04*x, 205)")
    assert design.x0 == pytest.approx(5125.0)
    assert design.slope_left == pytest.approx(0.04)
    assert design.slope_right == 0.0
    assert design.kink_gap == pytest.approx(-0.04)
    # the compact form without the explicit '*' parses the same way
    assert parse_kink_rule("min(0.04x, 205)").x0 == pytest.approx(5125.0)


def test_parse_kink_rule_rejects_garbage():
    with pytest.raises(ConfigError):
        parse_kink_rule("max(0.04*x, 205)")


def test_ingest_well_formed(tmp_path):
    path = tmp_path / "ok.csv"
    path.write_text("y,x\n1.0,0.1\n2.0,0.2\n3.0,0.3\n")
    sample, warnings = ingest(path, {"y": "y", "x": "x"})
    assert sample.n == 3
    assert warnings == []


def test_ingest_drops_bad_rows_with_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("y,x\n1.0,0.1\nnan,0.2\n3.0,0.3\n")
    sample, warnings = ingest(path, {"y": "y", "x": "x"})
    assert sample.n == 2
    assert "line" in warnings[0] and "3" in warnings[0]


def test_ingest_missing_column(tmp_path):
    path = tmp_path / "cols.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        ingest(path, {"y": "y", "x": "x"})


def run_cli(*args):
    return CliRunner().invoke(main, list(args), catch_exceptions=False)


def test_estimate_end_to_end(data_file, tmp_path):
    out = tmp_path / "out"
    res = run_cli("estimate", "--input", str(data_file),
                  "--y-col", "dur", "--x-col", "wage",
                  "--x0", "0", "--slope-left", "-1", "--slope-right", "1",
                  "--effect", "mean", "--boot", "120", "--seed", "5",
                  "--out", str(out))
    assert res.exit_code == 0, res.output
    report = json.loads((out / "report.json").read_text())
    assert report["schema"] == "rkdkit-report/1"
    entry = report["results"]["mean"]
    assert len(entry["estimates"]) == 1
    assert entry["se"] is not None and entry["band_lo"] is not None
    curves = pd.read_csv(out / "curves.csv")
    assert list(curves.columns) == ["effect", "grid", "estimate", "se",
                                    "band_lo", "band_hi", "bandwidth"]
    assert (out / "figures" / "mean_curve.png").exists()


def test_test_command_reports_pvalues(data_file, tmp_path):
    out = tmp_path / "out"
    res = run_cli("test", "--input", str(data_file),
                  "--y-col", "dur", "--x-col", "wage",
                  "--x0", "0", "--slope-left", "-1", "--slope-right", "1",
                  "--effect", "quantile", "--tau-grid", "0.25,0.5,0.75",
                  "--boot", "150", "--seed", "5", "--out", str(out), "--no-plots")
    assert res.exit_code == 0, res.output
    report = json.loads((out / "report.json").read_text())
    tests = report["results"]["quantile"]["tests"]
    for name in ("significance", "homogeneity"):
        assert 0.0 <= tests[name]["p_value"] <= 1.0
        assert tests[name]["reject"] == (tests[name]["statistic"] > tests[name]["critical_value"])


def test_config_error_exit_code(tmp_path):
    res = CliRunner().invoke(main, ["estimate", "--input", str(tmp_path / "nope.csv"),
                                    "--x0", "0", "--slope-left", "-1",
                                    "--slope-right", "1"])
    assert res.exit_code == 2


def test_numerical_error_exit_code(tmp_path):
    # all mass on one side of the kink: identification fails, exit code 3
    path = tmp_path / "oneside.csv"
    x = np.linspace(0.1, 1.0, 60)
    pd.DataFrame({"y": x * 2, "x": x}).to_csv(path, index=False)
    res = CliRunner().invoke(main, ["estimate", "--input", str(path),
                                    "--x0", "0", "--slope-left", "-1",
                                    "--slope-right", "1", "--effect", "mean",
                                    "--boot", "0", "--out", str(tmp_path / "o")])
    assert res.exit_code == 3


def test_report_round_trip_bit_identical(data_file, tmp_path):
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    base = ["--input", str(data_file), "--y-col", "dur", "--x-col", "wage",
            "--x0", "0", "--slope-left", "-1", "--slope-right", "1",
            "--effect", "mean", "--effect", "quantile",
            "--tau-grid", "0.3,0.5,0.7", "--boot", "100", "--seed", "17",
            "--no-plots"]
    assert run_cli("estimate", *base, "--out", str(out1)).exit_code == 0
    report = json.loads((out1 / "report.json").read_text())

    # re-run purely from the embedded config
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(report["config"]))
    assert run_cli("estimate", "--config", str(cfg_path), "--out", str(out2),
                   "--no-plots").exit_code == 0
    again = json.loads((out2 / "report.json").read_text())
    assert again["results"] == report["results"]


def test_band_command_requires_draws(data_file, tmp_path):
    res = CliRunner().invoke(main, ["band", "--input", str(data_file),
                                    "--y-col", "dur", "--x-col", "wage",
                                    "--x0", "0", "--slope-left", "-1",
                                    "--slope-right", "1", "--effect", "mean",
                                    "--boot", "10", "--out", str(tmp_path / "b"),
                                    "--no-plots"])
    assert res.exit_code == 2

    res = CliRunner().invoke(main, ["band", "--input", str(data_file),
                                    "--y-col", "dur", "--x-col", "wage",
                                    "--x0", "0", "--slope-left", "-1",
                                    "--slope-right", "1", "--effect", "mean",
                                    "--boot", "120", "--seed", "3",
                                    "--out", str(tmp_path / "b2"), "--no-plots"])
    assert res.exit_code == 0
    report = json.loads((tmp_path / "b2" / "report.json").read_text())
    assert report["results"]["mean"]["band_lo"] is not None


def test_bandwidth_command_skips_bootstrap(data_file, tmp_path):
    out = tmp_path / "bw"
    res = run_cli("bandwidth", "--input", str(data_file),
                  "--y-col", "dur", "--x-col", "wage",
                  "--x0", "0", "--slope-left", "-1", "--slope-right", "1",
                  "--effect", "mean", "--seed", "2", "--out", str(out), "--no-plots")
    assert res.exit_code == 0, res.output
    report = json.loads((out / "report.json").read_text())
    entry = report["results"]["mean"]
    assert entry["se"] is None
    assert "bandwidth_schedule" in entry


def test_simulate_command(tmp_path):
    out = tmp_path / "sim"
    res = run_cli("simulate", "--effect", "mean", "--n", "400", "--reps", "4",
                  "--boot", "40", "--seed", "9", "--workers", "1",
                  "--out", str(out))
    assert res.exit_code == 0, res.output
    study = json.loads((out / "study.json").read_text())
    assert study["schema"] == "rkdkit-study/1"
    assert study["tables"]["mean"]["400"]["reps_ok"] == 4
    assert (out / "figures" / "study_mean_rmse.png").exists()


def test_rule_checked_against_treatment_column(tmp_path):
    path = tmp_path / "ruled.csv"
    x = np.concatenate([np.linspace(100, 5124, 40), np.linspace(5126, 9000, 40)])
    b = np.minimum(0.04 * x, 205.0)
    y = 0.01 * x + np.sin(x / 500)
    pd.DataFrame({"y": y, "x": x, "b": b}).to_csv(path, index=False)
    cfg = RunConfig.from_dict({
        "input": str(path), "columns": {"y": "y", "x": "x", "b": "b"},
        "kink": {"rule": "min(0.04*x, 205)"}, "effects": ["mean"], "boot": 0,
    })
    design = cfg.design()
    assert design.x0 == pytest.approx(5125.0)
    # a corrupted treatment column is rejected
    bad = pd.read_csv(path)
    bad.loc[0, "b"] = 999.0
    bad_path = tmp_path / "ruled_bad.csv"
    bad.to_csv(bad_path, index=False)
    res = CliRunner().invoke(main, ["estimate", "--input", str(bad_path),
                                    "--b-col", "b", "--rule", "min(0.04*x, 205)",
                                    "--effect", "mean", "--boot", "0",
                                    "--out", str(tmp_path / "o3"), "--no-plots"])
    assert res.exit_code == 3
