from __future__ import annotations

import csv
import json

import pytest

from willmore_lab import cli


def run(tmp_path, *argv, name="out.json"):
    out = tmp_path / name
    code = cli.main([*argv, "--out", str(out)])
    data = json.loads(out.read_text()) if out.exists() and name.endswith(".json") else None
    return code, data


def test_energy_report_layout(tmp_path):
    code, rep = run(tmp_path, "energy", "--immersion", "sphere:r=2", "--n", "32")
    assert code == 0
    assert rep["schema_version"] == cli.SCHEMA_VERSION == cli.report_schema_version()
    assert rep["command"] == "energy" and rep["passed"] is True
    assert set(rep) == {"schema_version", "package_version", "command", "config", "passed", "result", "timestamp"}
    assert set(rep["timestamp"]) == {"utc", "runtime_seconds"}
    assert rep["result"]["energies"]["A"] > 0


def test_reports_are_deterministic_apart_from_timestamp(tmp_path):
    argv = ["residuals", "--immersion", "enneper", "--check", "x_system,codazzi", "--levels", "16,32,64"]
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main([*argv, "--out", str(a)]) == 0
    assert cli.main([*argv, "--out", str(b)]) == 0
    ja, jb = json.loads(a.read_text()), json.loads(b.read_text())
    for rep in (ja, jb):
        rep.pop("timestamp")
        rep["config"].pop("out")
    assert ja == jb


def test_residuals_csv_and_not_applicable(tmp_path):
    series = tmp_path / "res.csv"
    code, rep = run(tmp_path, "residuals", "--immersion", "clifford", "--levels", "16,32,64", "--csv", str(series))
    assert code == 0
    checks = rep["result"]["checks"]
    assert checks["normal_divergence"]["status"] == "not_applicable"
    assert checks["conservative"]["passed"]
    rows = list(csv.DictReader(series.open()))
    assert {r["check"] for r in rows} == {"dzbar_dz_phi", "hopf", "codazzi", "x_system", "conservative"}
    assert len(rows) == 5 * 3


def test_negative_control_exits_one(tmp_path):
    argv = [
        "residuals",
        "--immersion",
        "sphere:r=1",
        "--ambient",
        "perturbed:eps=0.3,center=[0.3,0.2,0.5]",
        "--check",
        "conservative",
        "--levels",
        "32,64,128",
    ]
    code, rep = run(tmp_path, *argv, "--curvature-sign", "-1")
    assert code == 1
    assert rep["result"]["checks"]["conservative"]["estimated_order"] < 0.5
    code, rep = run(tmp_path, *argv, "--curvature-sign", "1")
    assert code == 0


def test_dzsolve_cases(tmp_path):
    code, rep = run(tmp_path, "dzsolve", "--grid", "64", "--gamma-scale", "0.9")
    assert code == 1
    assert "gamma too large" in rep["result"]["error"]
    code, rep = run(tmp_path, "dzsolve", "--grid", "128")
    assert code == 0 and rep["result"]["sup_error_vs_2x1"] < 5e-3
    code, rep = run(tmp_path, "dzsolve", "--case", "potentials", "--grid", "64", "--tol", "1e-2")
    assert code == 0 and rep["result"]["h_recovery_error"] < 1e-2


def test_geodesic_spheres_csv_output(tmp_path):
    out = tmp_path / "fam.csv"
    code = cli.main(["geodesic-spheres", "--n", "32", "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 4
    assert set(rows[0]) == {"rho", "W", "F", "A", "A_over_rho2", "W_plus_A"}


def test_flow_and_variation_commands(tmp_path):
    trace = tmp_path / "trace.csv"
    code, rep = run(tmp_path, "flow", "--n", "16", "--max-steps", "5", "--csv", str(trace))
    assert code == 0
    assert rep["result"]["monotone"]
    assert len(list(csv.DictReader(trace.open()))) == rep["result"]["steps"] + 1
    code, rep = run(tmp_path, "variation", "--n", "24", "--fields", "2", "--functional", "A,W,F")
    assert code == 0
    assert len(rep["result"]["checks"]) == 6


def test_config_file_merges_and_flags_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"immersion": "sphere:r=3", "n": 16}))
    code, rep = run(tmp_path, "energy", "--config", str(cfg))
    assert code == 0 and rep["config"]["immersion"] == "sphere:r=3"
    code, rep = run(tmp_path, "energy", "--config", str(cfg), "--immersion", "torus")
    assert code == 0 and rep["config"]["immersion"] == "torus"
    cfg.write_text(json.dumps({"command": "residuals", "immersion": "enneper", "levels": [16, 32, 64], "check": "x_system"}))
    code, rep = run(tmp_path, "residuals", "--config", str(cfg))
    assert code == 0 and rep["config"]["levels"] == [16, 32, 64]


@pytest.mark.parametrize(
    "content,needle",
    [
        ('{"immersion": "sphere",\n "n": }', "line 2 column"),
        ('["sphere"]', "JSON object"),
        ('{"colour": 1}', "unknown keys"),
        ('{"command": "flow"}', "not 'energy'"),
    ],
)
def test_config_errors_exit_two(tmp_path, capsys, content, needle):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(content)
    code = cli.main(["energy", "--immersion", "sphere", "--config", str(cfg)])
    assert code == 2
    assert needle in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["energy"],
        ["energy", "--immersion", "klein"],
        ["energy", "--immersion", "sphere", "--ambient", "lens"],
        ["residuals", "--immersion", "enneper", "--levels", "0"],
        ["residuals", "--immersion", "enneper", "--levels", "64,32"],
        ["residuals", "--immersion", "enneper", "--check", "nope"],
        ["dzsolve", "--gamma-scale", "-1"],
        ["energy", "--immersion", str("missing.json")],
        ["bogus"],
    ],
)
def test_bad_arguments_exit_two(tmp_path, argv):
    assert cli.main([*argv, "--out", str(tmp_path / "x.json")]) == 2


def test_thread_variable_validation(monkeypatch, tmp_path):
    monkeypatch.setenv("WILLMORE_LAB_THREADS", "zero")
    assert cli.main(["energy", "--immersion", "sphere", "--n", "16"]) == 2
    monkeypatch.setenv("WILLMORE_LAB_THREADS", "2")
    assert cli.main(["energy", "--immersion", "sphere", "--n", "16", "--out", str(tmp_path / "e.json")]) == 0


def test_internal_error_exits_three(monkeypatch, capsys):
    def boom(args):
        raise RuntimeError("unexpected")

    monkeypatch.setattr(cli, "cmd_energy", boom)
    assert cli.main(["energy", "--immersion", "sphere"]) == 3
    assert "internal error" in capsys.readouterr().err


def test_stdout_report(capsys):
    assert cli.main(["energy", "--immersion", "plane", "--n", "8"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["result"]["energies"]["W"] == pytest.approx(0.0, abs=1e-12)
