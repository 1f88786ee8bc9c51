import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from distforecast import cli
from distforecast.data_io import load_returns

# calibration and power runs: simulated with the EWMA-scaled sampler and
# evaluated with per-day volatility inside each window
CAL_N, CAL_WINDOW, CAL_STRIDE, CAL_SEEDS = 1500, 500, 250, 20
P_KEYS = ("grs_contour_p", "grs_contour_full_p", "grs_lag3_p", "grs_lag10_p")


def _main(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def sample(tmp_path_factory):
    d = tmp_path_factory.mktemp("sample")
    assert _main("simulate", "--n", 1200, "--seed", 7, "--out", d) == 0
    return d / "returns.csv"


def test_simulate_writes_series_and_dgp(sample):
    s = load_returns(sample)
    assert len(s) == 1200
    dgp = json.loads((sample.parent / "dgp.json").read_text())
    assert dgp["scale"] == "ewma" and dgp["params"]["spec"] == [2, 3]


def test_fit_reports_44_parameters(sample, tmp_path, capsys):
    assert _main("fit", "--input", sample, "--model", "ordered", "--spec", "2,3",
                 "--out", tmp_path) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["n_params"] == 44
    log = json.loads((tmp_path / "fit_log.json").read_text())
    assert log["loglik"] >= log["init_loglik"]
    assert log["floor_hits"] <= 0.01 * log["n_differences"]


def test_separate_fit_reports_111(sample, tmp_path, capsys):
    assert _main("fit", "--input", sample, "--model", "separate", "--out", tmp_path) == 0
    assert json.loads(capsys.readouterr().out)["n_params"] == 111


def test_rank_deficient_spec_fails(sample, tmp_path, capsys):
    code = _main("fit", "--input", sample, "--spec", "40,40", "--grid", "p=19",
                 "--out", tmp_path)
    assert code == cli.EXIT_CONFIG
    assert "RankDeficientBasis" in capsys.readouterr().err
    assert not (tmp_path / "model.json").exists()


def test_same_seed_byte_identical_models(sample, tmp_path):
    for sub in ("a", "b"):
        assert _main("fit", "--input", sample, "--seed", 3, "--out", tmp_path / sub) == 0
    assert (tmp_path / "a" / "model.json").read_bytes() == \
        (tmp_path / "b" / "model.json").read_bytes()


def test_provenance_replay(sample, tmp_path):
    first = tmp_path / "first"
    assert _main("backtest", "--input", sample, "--window", 1000, "--stride", 100,
                 "--grid", "p=9", "--out", first) == 0
    again = tmp_path / "again"
    assert _main("backtest", "--config", first / "run_config.json", "--out", again) == 0
    for name in ("backtest_report.json", "benchmark_report.json", "equity.csv",
                 "signals.csv"):
        assert (first / name).read_bytes() == (again / name).read_bytes()
    cfg = json.loads((again / "run_config.json").read_text())
    assert cfg["window"] == 1000 and cfg["out"] == str(again)


def test_config_replay_rejects_wrong_command(sample, tmp_path):
    assert _main("simulate", "--n", 200, "--out", tmp_path) == 0
    assert _main("fit", "--config", tmp_path / "run_config.json") == cli.EXIT_CONFIG


@pytest.mark.parametrize("argv", [
    ("fit",),
    ("fit", "--input", "missing.csv"),
    ("evaluate", "--input", "x.csv", "--window", 50),
    ("simulate", "--grid", "0.5,0.4"),
    ("backtest", "--input", "x.csv", "--stride", 0),
])
def test_config_errors_exit_two(argv, tmp_path):
    assert _main(*argv, "--out", tmp_path) == cli.EXIT_CONFIG


def test_seed_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(cli.SEED_ENV, "41")
    assert _main("simulate", "--n", 50, "--out", tmp_path / "env") == 0
    assert _main("simulate", "--n", 50, "--seed", 41, "--out", tmp_path / "flag") == 0
    assert (tmp_path / "env" / "returns.csv").read_bytes() == \
        (tmp_path / "flag" / "returns.csv").read_bytes()
    monkeypatch.setenv(cli.SEED_ENV, "forty")
    assert _main("simulate", "--n", 50, "--out", tmp_path / "bad") == cli.EXIT_CONFIG


def test_numerical_failure_exit_three(tmp_path):
    p = tmp_path / "flat.csv"
    p.write_text("date,value\n" + "".join(f"2020-01-{d:02d},0.0\n" for d in range(1, 29)))
    assert _main("fit", "--input", p, "--grid", "p=3", "--spec", "1,1",
                 "--out", tmp_path) == cli.EXIT_NUMERICAL


def test_select_writes_table(tmp_path, capsys):
    assert _main("simulate", "--n", 1500, "--grid", "p=9", "--seed", 2,
                 "--out", tmp_path) == 0
    capsys.readouterr()
    assert _main("select", "--input", tmp_path / "returns.csv", "--max-order", 3,
                 "--out", tmp_path) == 0
    best = json.loads(capsys.readouterr().out)["best"]
    text = (tmp_path / "bic_table.csv").read_text().splitlines()
    assert text[0] == "q1,q2,n_params,loglik,bic" and len(text) == 1 + 16
    assert len(best) == 2


def _evaluate(seed, tmp, variance_scale=1.0):
    d = tmp / f"s{seed}"
    assert _main("simulate", "--n", CAL_N, "--seed", seed, "--out", d) == 0
    assert _main("evaluate", "--input", d / "returns.csv", "--window", CAL_WINDOW,
                 "--stride", CAL_STRIDE, "--vol-at", "daily", "--seed", seed,
                 "--variance-scale", variance_scale, "--out", d) == 0
    return json.loads((d / "eval_report.json").read_text())


def test_evaluate_report_schema(tmp_path):
    rep = _evaluate(3000, tmp_path)
    stats_keys = {k.replace("_p", "_stat") for k in P_KEYS}
    assert set(rep) == set(P_KEYS) | stats_keys | {"mean_brier", "mean_crps"}
    assert rep["mean_brier"] <= 0 and rep["mean_crps"] <= 0
    res = (tmp_path / "s3000" / "residuals.csv").read_text().splitlines()
    assert res[0] == "date,residual" and len(res) == 1 + CAL_N - CAL_WINDOW


def test_well_specified_runs_are_calibrated(tmp_path):
    ok = []
    for i in range(CAL_SEEDS):
        rep = _evaluate(3000 + i, tmp_path)
        ok.append(all(rep[k] > 0.05 for k in P_KEYS))
        shutil.rmtree(tmp_path / f"s{3000 + i}")
    rate = float(np.mean(ok))
    print(f"all four GRS p-values above 0.05 in {rate:.0%} of {CAL_SEEDS} seeds")
    assert rate >= 0.9


def test_halved_variance_is_detected(tmp_path):
    hits = 0
    for i in range(5):
        rep = _evaluate(3100 + i, tmp_path, variance_scale=0.5)
        hits += min(rep[k] for k in P_KEYS) < 0.01
    assert hits == 5


def test_console_script_entry_point(tmp_path):
    exe = shutil.which("distforecast")
    cmd = [exe] if exe else [sys.executable, "-m", "distforecast.cli"]
    out = subprocess.run(cmd + ["simulate", "--n", "30", "--out", str(tmp_path)],
                         capture_output=True, text=True, timeout=120)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "returns.csv").exists()
