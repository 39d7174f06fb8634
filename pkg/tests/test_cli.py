import json
import re
import subprocess
import sys

import numpy as np
import pytest

import resodrift as rd
from resodrift.cli import emit_plots, main
from resodrift.errors import UsageError
from resodrift.systems import load_system, system_to_dict


def run_cli(*argv):
    return main(list(argv))


def test_console_script_catalog_runs():
    proc = subprocess.run(
        ["resodrift", "catalog"], capture_output=True, text=True, timeout=120
    )
    assert proc.returncode == 0
    for name in rd.catalog_names():
        assert name in proc.stdout
    assert "[ok]" in proc.stdout and "FAIL" not in proc.stdout


def test_catalog_report_json(tmp_path):
    out = tmp_path / "cat"
    assert run_cli("catalog", "--out", str(out)) == 0
    data = json.loads((out / "catalog.json").read_text())
    assert sorted(data) == rd.catalog_names()
    assert all(entry["passed"] for entry in data.values())


def test_reduce_artifacts_round_trip(tmp_path):
    out = tmp_path / "red"
    assert run_cli("reduce", "--system", "moser", "--out", str(out)) == 0
    for name in ("config.json", "reduced_system.json", "reduce_report.json"):
        assert (out / name).exists()
    report = json.loads((out / "reduce_report.json").read_text())
    assert report["determinant"] in (-1, 1)
    assert abs(report["segment_axis_residual"]) <= 1e-12
    assert report["min_transverse_frequency"] >= report["reduced_varpi"] - 1e-12
    assert report["channel"]["passed"] is True
    # the emitted definition is itself loadable
    system, f = load_system(json.loads((out / "reduced_system.json").read_text()))
    assert system.is_reduced
    assert not f.is_zero


def test_reduce_already_reduced_is_usage_error(tmp_path):
    rc = run_cli("reduce", "--system", "reduced-moser", "--out", str(tmp_path / "x"))
    assert rc == 2


def test_genericity_artifacts_and_auto_reduction(tmp_path):
    out1 = tmp_path / "g1"
    assert run_cli("genericity", "--system", "reduced-moser", "--out", str(out1)) == 0
    payload = json.loads((out1 / "genericity.json").read_text())
    assert payload["passed"] is True
    assert payload["lambda"] == pytest.approx(0.9, rel=1e-12)
    assert payload["reduced_first"] is False
    out2 = tmp_path / "g2"
    assert run_cli("genericity", "--system", "moser", "--out", str(out2)) == 0
    payload2 = json.loads((out2 / "genericity.json").read_text())
    assert payload2["reduced_first"] is True


def test_genericity_fails_on_flat_average(tmp_path):
    entry = rd.get_entry("reduced-moser")
    flat = rd.FourierPerturbation.from_terms([((0, 1), 0.0, 0.5)])
    spec = system_to_dict(entry.system, flat)
    path = tmp_path / "flat.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / "gflat"
    rc = run_cli("genericity", "--system-file", str(path), "--out", str(out))
    assert rc == 1
    payload = json.loads((out / "genericity.json").read_text())
    assert payload["passed"] is False


def test_normal_form_single_step_payload(tmp_path):
    out = tmp_path / "nf"
    rc = run_cli(
        "normal-form", "--system", "generic3", "--epsilon", "1e-2", "--out", str(out)
    )
    assert rc == 0
    payload = json.loads((out / "normal_form.json").read_text())
    assert payload["steps"] == 1
    assert payload["K"] >= 2
    assert payload["residual_homological"] <= 1e-9
    assert payload["phi_displacement"] <= payload["displacement_bound"]
    assert "K2" not in payload


def test_simulate_orbit_and_report(tmp_path):
    out = tmp_path / "sim"
    rc = run_cli(
        "simulate",
        "--system", "reduced-moser",
        "--epsilon", "1e-3",
        "--t-end", "10",
        "--samples", "33",
        "--out", str(out),
    )
    assert rc == 0
    lines = (out / "orbit.csv").read_text().strip().split("\n")
    assert lines[0] == "t,theta1,theta2,I1,I2,energy,absI2,dist_channel"
    assert len(lines) == 1 + 33
    report = json.loads((out / "simulate_report.json").read_text())
    assert report["t_end"] == 10.0
    assert report["energy_drift"] < 1e-9
    assert report["flagged"] is False


def test_simulate_argument_validation(tmp_path):
    base = [
        "simulate", "--system", "reduced-moser", "--epsilon", "1e-3", "--t-end", "1",
        "--out", str(tmp_path / "v"),
    ]
    assert run_cli(*base, "--state", "1,2") == 2
    assert run_cli(*base, "--state", "a,b,c,d") == 2
    assert run_cli(*base, "--tol", "0,1e-8") == 2
    assert run_cli(*base, "--tol", "nope") == 2


def test_drift_cli_with_plots(tmp_path):
    out = tmp_path / "drift"
    rc = run_cli(
        "drift", "--system", "generic3", "--epsilon", "1e-2", "--plots",
        "--out", str(out),
    )
    assert rc == 0
    report = json.loads((out / "drift_report.json").read_text())
    assert report["pass_upper"] == 1 and report["pass_lower"] == 1
    assert report["optimality"]["passed"] is True
    assert report["reduced_first"] is False
    script = (out / "orbit.gp").read_text()
    assert "set datafile separator ','" in script
    # the transverse band is drawn when confinement was measured
    assert report["c_fit"] > 0
    assert "gray" in script


def test_connect_cli_round_trip(tmp_path):
    out = tmp_path / "conn"
    rc = run_cli(
        "connect", "--system", "reduced-moser", "--epsilon", "1e-2",
        "--from", "1.0", "--to", "1.05", "--out", str(out),
    )
    assert rc == 0
    report = json.loads((out / "connect_report.json").read_text())
    assert report["reached"] is True
    assert report["terminal_distance"] <= 1e-6
    assert report["tau"] == pytest.approx(5.0, abs=1e-3)


def test_connect_zero_epsilon_distinct_targets_fails(tmp_path):
    rc = run_cli(
        "connect", "--system", "reduced-moser", "--epsilon", "0",
        "--from", "1.0", "--to", "1.05", "--out", str(tmp_path / "c0"),
    )
    assert rc == 1


def test_sweep_cli_csv_and_fit(tmp_path):
    out = tmp_path / "sw"
    rc = run_cli(
        "sweep", "--system", "reduced-moser",
        "--epsilons", "1e-1,3e-2,1e-2",
        "--target-drift", "0.05",
        "--plots",
        "--out", str(out),
    )
    assert rc == 0
    lines = (out / "sweep.csv").read_text().strip().split("\n")
    assert lines[0] == "epsilon,delta,tau,drift,maxI2,c_fit,pass_upper,pass_lower"
    assert len(lines) == 4
    fit = json.loads((out / "fit.json").read_text())
    assert abs(fit["p"] - 1.0) < 1e-3
    assert fit["all_reached"] is True
    script = (out / "sweep.gp").read_text()
    assert "set logscale xy" in script
    assert "title 'fit'" in script


def test_epsilon_range_checks(tmp_path):
    assert run_cli(
        "drift", "--system", "reduced-moser", "--epsilon", "1.5",
        "--out", str(tmp_path / "a"),
    ) == 2
    assert run_cli(
        "normal-form", "--system", "generic3", "--epsilon", "0",
        "--out", str(tmp_path / "b"),
    ) == 2


def test_source_resolution_errors(tmp_path):
    assert run_cli("drift", "--system", "nope", "--epsilon", "1e-3") == 2
    assert run_cli("drift", "--epsilon", "1e-3") == 2
    assert run_cli("bogus") == 2


def test_identical_invocations_are_byte_identical(tmp_path):
    argv = ["drift", "--system", "reduced-moser", "--epsilon", "1e-2"]
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert run_cli(*argv, "--out", str(out1)) == 0
    assert run_cli(*argv, "--out", str(out2)) == 0
    for name in ("config.json", "drift_report.json", "orbit.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_default_run_directory_is_hash_named(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run_cli("genericity", "--system", "reduced-moser") == 0
    runs = list((tmp_path / "runs").iterdir())
    assert len(runs) == 1
    assert re.fullmatch(r"[0-9a-f]{12}", runs[0].name)
    # same config hashes to the same directory, so a re-run adds nothing
    assert run_cli("genericity", "--system", "reduced-moser") == 0
    assert len(list((tmp_path / "runs").iterdir())) == 1


def test_emit_plots_requires_artifacts(tmp_path):
    with pytest.raises(UsageError, match="orbit.csv or sweep.csv"):
        emit_plots(tmp_path)


def test_system_file_source(tmp_path):
    entry = rd.get_entry("moser")
    path = tmp_path / "moser.json"
    path.write_text(json.dumps(system_to_dict(entry.system, entry.perturbation)))
    out = tmp_path / "red"
    assert run_cli("reduce", "--system-file", str(path), "--out", str(out)) == 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["source"]["file"] == str(path)
