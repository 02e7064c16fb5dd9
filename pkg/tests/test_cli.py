import json

import pytest

from illiquid_hjb.cli import TASKS, main

SUPEREXP = {"kind": "superexponential", "kappa": 0.3, "eps": 0.5}


def _run(tmp_path, task, cfg, name="out", extra=()):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    return main([task, "--config", str(path), "--out", str(out), *extra]), out


def test_subcommands_registered():
    assert set(TASKS) >= {"verify-symmetries", "verify-structure", "verify-reductions", "solve-ode", "solve-pde",
                          "simulate", "full-report"}
    with pytest.raises(SystemExit):
        main([])


def test_structure_passes_and_writes_artifacts(tmp_path):
    rc, out = _run(tmp_path, "verify-structure", {})
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] and rep["predicates"]["label set"]
    assert (out / "metadata.json").exists() and (out / "summary.md").read_text().startswith("# verify-structure")


def test_report_is_deterministic(tmp_path):
    cfg = {"cases": ["LOG_EXP_H2", "HARA_EXP_H4_RK"], "n_samples": 50, "seed": 4}
    rc1, a = _run(tmp_path, "verify-reductions", cfg, "a")
    rc2, b = _run(tmp_path, "verify-reductions", cfg, "b")
    assert rc1 == rc2 == 0
    assert (a / "report.json").read_bytes() == (b / "report.json").read_bytes()
    assert (a / "reductions.csv").read_bytes() == (b / "reductions.csv").read_bytes()


def test_failed_predicate_exit_code(tmp_path):
    rc, out = _run(tmp_path, "verify-reductions", {"cases": ["HARA_EXP_H8_ODE"], "n_samples": 20})
    assert rc == 2
    assert json.loads((out / "report.json").read_text())["passed"] is False


def test_expected_u4_failure(tmp_path):
    cfg = {"spec": "HARA_GENERAL", "survival": SUPEREXP, "expect": ["fail-U4"], "n_jets": 100}
    rc, out = _run(tmp_path, "verify-symmetries", cfg)
    assert rc == 0
    rows = json.loads((out / "report.json").read_text())["results"]["generators"]
    assert any(r["generator"] == "U4" and r["max_defect"] >= 1e-2 for r in rows)


def test_solve_ode_and_simulate(tmp_path):
    rc, out = _run(tmp_path, "solve-ode", {"cases": ["LOG_EXP_H8_ODE"], "grid": {"n": 128}}, "ode")
    assert rc == 0 and any(p.suffix == ".csv" for p in out.iterdir())
    cfg = {"paths": {"dt": 0.01, "n_paths": 400}, "sweep": False, "grid": {"n": 256}}
    rc, out = _run(tmp_path, "simulate", cfg, "sim", extra=("--seed", "3"))
    assert rc == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["seed"] == 3 and "Monte Carlo" in (out / "summary.md").read_text()


@pytest.mark.parametrize("cfg", [
    {"unknown": 1},
    {"grid": {"nodes": 5}},
    {"cases": ["NOPE"]},
    {"expect": ["fail-U3"]},
    {"task": "solve-ode"},
])
def test_config_errors_exit_one(tmp_path, cfg, capsys):
    rc, _ = _run(tmp_path, "verify-structure", cfg)
    assert rc == 1
    assert capsys.readouterr().err.startswith("error:")


def test_malformed_json_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"seed": 1,\n "grid": }')
    assert main(["verify-structure", "--config", str(path), "--out", str(tmp_path / "o")]) == 1
    assert "line 2" in capsys.readouterr().err
