"""Tests pour le fichier d'ajustement JSON et les tables de coefficients"""

import json

import numpy as np
import pandas as pd
import pytest
from pandera.errors import SchemaError

from lpsmc.credible_intervals import ci_baseline_survival, ci_incidence, ci_latent
from lpsmc.fit_file import FORMAT, VERSION, read_fit_file, write_fit_file
from lpsmc.tables import coefficient_table, format_coefficients_text, write_table


def test_fit_file_bytes_are_stable(scenario1_fit, tmp_path):
    first = write_fit_file(scenario1_fit, tmp_path / "a.json", {"AGE": 47.5})
    second = write_fit_file(scenario1_fit, tmp_path / "b.json", {"AGE": 47.5})
    assert first.read_bytes() == second.read_bytes()


def test_fit_file_round_trip(scenario1_fit, tmp_path):
    path = write_fit_file(scenario1_fit, tmp_path / "fit.json", {"x1": 0.25})
    restored, centering = read_fit_file(path)
    assert centering == {"x1": 0.25}
    np.testing.assert_array_equal(restored.mean, scenario1_fit.mean)
    np.testing.assert_array_equal(restored.covariance, scenario1_fit.covariance)
    assert restored.v_star == scenario1_fit.v_star
    assert restored.constrained_index == scenario1_fit.constrained_index
    assert restored.labels() == scenario1_fit.labels()
    assert restored.incidence_labels == ("x1", "x2")
    assert restored.hyper == scenario1_fit.hyper

    again = write_fit_file(restored, tmp_path / "again.json", centering)
    assert again.read_bytes() == path.read_bytes()


def test_round_trip_intervals_identical(scenario1_fit, tmp_path):
    restored, _ = read_fit_file(write_fit_file(scenario1_fit, tmp_path / "fit.json"))
    x = np.array([1.0, 0.3, 1.0])
    assert ci_latent(restored, "gamma2") == ci_latent(scenario1_fit, "gamma2")
    assert ci_incidence(restored, x) == ci_incidence(scenario1_fit, x)
    assert ci_baseline_survival(restored, 4.0) == ci_baseline_survival(scenario1_fit, 4.0)


def test_fit_file_header(scenario1_fit, tmp_path):
    payload = json.loads(write_fit_file(scenario1_fit, tmp_path / "fit.json").read_text())
    assert payload["format"] == FORMAT
    assert payload["version"] == VERSION
    assert payload["dimensions"]["dim"] == scenario1_fit.K + 3 + 2


def test_fit_file_rejects_unknown_version(scenario1_fit, tmp_path):
    path = write_fit_file(scenario1_fit, tmp_path / "fit.json")
    payload = json.loads(path.read_text())
    payload["version"] = VERSION + 1
    path.write_text(json.dumps(payload))
    with pytest.raises(ValueError):
        read_fit_file(path)


def test_coefficient_table(scenario1_fit):
    table = coefficient_table(scenario1_fit, levels=(0.95, 0.90))
    assert list(table["parameter"].unique()) == ["beta0", "beta1", "beta2", "gamma1", "gamma2"]
    assert len(table) == 10
    beta1 = table[(table["parameter"] == "beta1") & (table["level"] == 0.95)].iloc[0]
    interval = ci_latent(scenario1_fit, "beta1")
    assert beta1["label"] == "x1"
    assert (beta1["lower"], beta1["upper"]) == (interval.lower, interval.upper)
    assert beta1["sd"] == pytest.approx(np.sqrt(scenario1_fit.covariance[11, 11]))


def test_coefficient_table_with_spline(scenario1_fit):
    table = coefficient_table(scenario1_fit, include_spline=True)
    spline = table[table["part"] == "spline"]
    assert len(spline) == scenario1_fit.K
    last = spline.iloc[-1]
    assert last["estimate"] == 1.0 and last["sd"] == 0.0
    assert np.isnan(last["lower"]) and np.isnan(last["upper"])


def test_format_coefficients_text(scenario1_fit):
    text = format_coefficients_text(coefficient_table(scenario1_fit, include_spline=True))
    lines = text.splitlines()
    assert lines[0].startswith("Paramètre")
    assert "Incidence" in lines and "Latence" in lines and "Spline" in lines
    assert any(line.strip().startswith("β1 (x1)") for line in lines)
    assert any(line.strip().startswith("γ2 (z2)") for line in lines)
    theta_last = [line for line in lines if line.strip().startswith(f"θ{scenario1_fit.K} ")]
    assert theta_last and theta_last[0].rstrip().endswith("-")


def test_write_table_validates(tmp_path):
    bad = pd.DataFrame({"t": [0.0], "estimate": [1.2], "lower": [0.9], "upper": [1.0]})
    with pytest.raises(SchemaError):
        write_table(bad, tmp_path / "curve.csv", "curve")
    with pytest.raises(ValueError):
        write_table(bad, tmp_path / "curve.csv", "inconnu")
    good = pd.DataFrame({"t": [0.0], "estimate": [0.9], "lower": [0.8], "upper": [1.0]})
    assert write_table(good, tmp_path / "out" / "curve.csv", "curve").exists()
