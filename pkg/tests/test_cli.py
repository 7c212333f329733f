"""Tests de l'interface en ligne de commande"""

import json

import numpy as np
import pandas as pd
import pytest

from lpsmc.cli import (
    EXIT_DATA,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    build_parser,
    evaluate_target,
    main,
    parse_target,
)
from lpsmc.errors import UsageError
from lpsmc.fit_file import write_fit_file
from tests.conftest import CSV_DIR

MODEL_SECTION = "[model]\nK = 10\nJ = 200\ndelta_v = 0.5\n"


def _write_config(directory, model=MODEL_SECTION):
    path = directory / "config.ini"
    path.write_text(
        f"[paths]\noutput_dir = {directory / 'out'}\nlog_dir = {directory / 'logs'}\n\n"
        f"{model}\n[simulation]\nbase_seed = 7\n",
        encoding="utf-8",
    )
    return path


def _run(directory, *args, config=None):
    config = config or _write_config(directory)
    return main(["--config", str(config), "--log-file", str(directory / "cli.log"), *args])


@pytest.fixture(scope="module")
def scenario_csv(tmp_path_factory, scenario1_data):
    """Jeu Scénario 1 écrit en CSV (colonnes time, status, x1, x2, z1, z2)"""
    data = scenario1_data
    frame = pd.DataFrame(
        {
            "time": data.times,
            "status": data.events.astype(int),
            "x1": data.X[:, 1],
            "x2": data.X[:, 2].astype(int),
            "z1": data.Z[:, 0],
            "z2": data.Z[:, 1].astype(int),
        }
    )
    path = tmp_path_factory.mktemp("data") / "scenario1.csv"
    frame.to_csv(path, index=False, float_format="%.17g")
    return path


@pytest.fixture(scope="module")
def fitted(tmp_path_factory, scenario_csv):
    """Sorties de `lpsmc fit` sur le jeu Scénario 1"""
    directory = tmp_path_factory.mktemp("fit")
    code = _run(
        directory,
        "--out-dir",
        str(directory / "out"),
        "fit",
        "--input",
        str(scenario_csv),
        "--time-col",
        "time",
        "--status-col",
        "status",
        "--incidence-cols",
        "x1,x2",
        "--latency-cols",
        "z1,z2",
        "--alpha",
        "0.05",
        "--alpha",
        "0.10",
        "--center",
        "x1",
        "--t-upper",
        "11",
        "--profile-grid",
        "0:12:1",
    )
    return code, directory / "out"


# ---------------------------------------------------------------------------
# Grammaire des cibles
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "target,kind,args",
    [
        ("latent h=beta1", "latent", {"h": "beta1"}),
        ("incidence x=(1,0,0.5)", "incidence", {"x": "(1,0,0.5)"}),
        ("cure x=(1, 80)", "cure", {"x": "(1, 80)"}),
        ("S0 t=5", "S0", {"t": "5"}),
        ("S0 q=0.5", "S0", {"q": "0.5"}),
        ("Su z=(0,0.4) t=3", "Su", {"z": "(0,0.4)", "t": "3"}),
        ("Su z=(0,0.4) q=0.5", "Su", {"z": "(0,0.4)", "q": "0.5"}),
    ],
)
def test_parse_target(target, kind, args):
    assert parse_target(target) == (kind, args)


@pytest.mark.parametrize(
    "target",
    [
        "hazard t=3",
        "latent",
        "S0",
        "S0 t=3 q=0.5",
        "Su t=3",
        "incidence x=(1,0) extra",
        "",
    ],
)
def test_parse_target_invalid(target):
    with pytest.raises(UsageError):
        parse_target(target)


def test_evaluate_target_centers_profiles(scenario1_fit):
    centering = {"x1": 0.5}
    shifted = evaluate_target(scenario1_fit, "incidence x=(1,0.5,1)", 0.05, centering)
    plain = evaluate_target(scenario1_fit, "incidence x=(1,0,1)", 0.05)
    assert shifted["estimate"] == plain["estimate"]
    assert shifted["transform"] == "log(-log)"


def test_evaluate_target_quantile(scenario1_fit):
    row = evaluate_target(scenario1_fit, "S0 q=0.5", 0.05)
    assert row["lower"] <= row["estimate"] <= row["upper"]
    assert row["time"] > 0
    assert row["note"] == ""


def test_evaluate_target_degenerate_incidence(scenario1_fit):
    row = evaluate_target(scenario1_fit, "cure x=(1,-1000,0)", 0.05)
    assert row["note"] == "intervalle dégénéré"
    assert row["estimate"] == row["lower"] == row["upper"]
    assert row["transform"] == "degenerate"


# ---------------------------------------------------------------------------
# Commandes
# ---------------------------------------------------------------------------


def test_fit_outputs(fitted):
    code, out = fitted
    assert code == EXIT_OK
    for name in (
        "coefficients.csv",
        "coefficients.txt",
        "baseline_survival.csv",
        "latency_survival.csv",
        "v_profile.csv",
        "fit.json",
    ):
        assert (out / name).exists(), name
    table = pd.read_csv(out / "coefficients.csv")
    assert sorted(table["level"].unique()) == [0.90, 0.95]
    assert set(table["parameter"]) == {"beta0", "beta1", "beta2", "gamma1", "gamma2"}
    payload = json.loads((out / "fit.json").read_text(encoding="utf-8"))
    assert set(payload["centering"]) == {"x1"}
    profile = pd.read_csv(out / "v_profile.csv")
    assert len(profile) == 13


def test_intervals_command(fitted, tmp_path):
    _, out = fitted
    targets = tmp_path / "targets.txt"
    targets.write_text("S0 q=0.5\nSu z=(0,0.4) t=3\n\n", encoding="utf-8")
    result = tmp_path / "intervals.csv"
    code = _run(
        tmp_path,
        "intervals",
        "--fit-file",
        str(out / "fit.json"),
        "--target",
        "latent h=beta1",
        "--target",
        "cure x=(1,0,1)",
        "--targets-file",
        str(targets),
        "--alpha",
        "0.05",
        "--alpha",
        "0.1",
        "--out",
        str(result),
    )
    assert code == EXIT_OK
    table = pd.read_csv(result, keep_default_na=False)
    assert len(table) == 8
    assert list(table.columns) == [
        "target",
        "time",
        "estimate",
        "lower",
        "upper",
        "level",
        "transform",
        "note",
    ]
    lower = table["lower"].astype(float)
    upper = table["upper"].astype(float)
    assert np.all(lower <= upper)


def test_intervals_constrained_coordinate(fitted, tmp_path):
    _, out = fitted
    code = _run(tmp_path, "intervals", "--fit-file", str(out / "fit.json"), "--target", "latent h=theta10")
    assert code == EXIT_USAGE


def test_intervals_bad_target(fitted, tmp_path):
    _, out = fitted
    code = _run(tmp_path, "intervals", "--fit-file", str(out / "fit.json"), "--target", "S0")
    assert code == EXIT_USAGE


def test_intervals_missing_fit_file(tmp_path):
    code = _run(tmp_path, "intervals", "--fit-file", str(tmp_path / "absent.json"), "--target", "S0 t=1")
    assert code == EXIT_DATA


def test_fit_invalid_status(tmp_path):
    code = _run(
        tmp_path,
        "fit",
        "--input",
        str(CSV_DIR / "e1684_status_row7.csv"),
        "--time-col",
        "FAILTIME",
        "--status-col",
        "FAILCENS",
        "--incidence-cols",
        "TRT",
    )
    assert code == EXIT_DATA
    assert "ligne 7" in (tmp_path / "cli.log").read_text(encoding="utf-8")


def test_fit_invalid_alpha(tmp_path):
    code = _run(
        tmp_path,
        "fit",
        "--input",
        str(CSV_DIR / "three_rows.csv"),
        "--time-col",
        "time",
        "--status-col",
        "status",
        "--alpha",
        "1.5",
    )
    assert code == EXIT_USAGE


def test_fit_convergence_failure(tmp_path, scenario_csv):
    config = _write_config(tmp_path, MODEL_SECTION + "newton_max_iter = 1\n")
    code = _run(
        tmp_path,
        "fit",
        "--input",
        str(scenario_csv),
        "--time-col",
        "time",
        "--status-col",
        "status",
        config=config,
    )
    assert code == EXIT_NUMERIC


def test_unknown_scenario(tmp_path):
    code = _run(tmp_path, "--out-dir", str(tmp_path / "sim"), "simulate", "--scenario", "scenario9")
    assert code == EXIT_USAGE


def test_missing_required_option():
    with pytest.raises(SystemExit) as exc_info:
        build_parser().parse_args(["fit", "--input", "x.csv"])
    assert exc_info.value.code == 2


def test_simulate_smoke(tmp_path):
    out = tmp_path / "sim"
    code = _run(
        tmp_path,
        "--out-dir",
        str(out),
        "simulate",
        "--scenario",
        "scenario2",
        "--n",
        "150",
        "--S",
        "2",
        "--workers",
        "1",
        "--dump-curves",
    )
    assert code == EXIT_OK
    for name in ("study_summary.csv", "study_summary.txt", "replications.csv", "ase.csv"):
        assert (out / name).exists(), name
    assert (out / "curves" / "baseline_rep0.csv").exists()
    assert (out / "curves" / "baseline_rep1.csv").exists()
    median = pd.read_csv(out / "median_curve.csv")
    assert list(median.columns) == ["t", "median"]
    assert len(median) == 200


def test_km_command(tmp_path):
    out = tmp_path / "km"
    code = _run(
        tmp_path,
        "--out-dir",
        str(out),
        "km",
        "--input",
        str(CSV_DIR / "e1684_sample.csv"),
        "--time-col",
        "FAILTIME",
        "--status-col",
        "FAILCENS",
    )
    assert code == EXIT_OK
    table = pd.read_csv(out / "kaplan_meier.csv")
    assert len(table) == 10
    assert table["survival"].is_monotonic_decreasing


def test_km_command_all_censored(tmp_path):
    source = tmp_path / "censored.csv"
    source.write_text("time,status\n1.0,0\n2.5,0\n4.0,0\n", encoding="utf-8")
    out = tmp_path / "km"
    code = _run(
        tmp_path, "--out-dir", str(out), "km", "--input", str(source),
        "--time-col", "time", "--status-col", "status",
    )
    assert code == EXIT_OK
    table = pd.read_csv(out / "kaplan_meier.csv")
    assert list(table["survival"]) == [1.0, 1.0, 1.0]
    assert list(table["censored"]) == [1, 1, 1]


def test_intervals_from_saved_fit(scenario1_fit, tmp_path):
    path = write_fit_file(scenario1_fit, tmp_path / "fit.json")
    result = tmp_path / "out.csv"
    code = _run(tmp_path, "intervals", "--fit-file", str(path), "--target", "latent h=11", "--out", str(result))
    assert code == EXIT_OK
    row = pd.read_csv(result).iloc[0]
    assert row["estimate"] == pytest.approx(scenario1_fit.mean[11])
