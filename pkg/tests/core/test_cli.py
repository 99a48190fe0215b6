# tests/core/test_cli.py
import json

import numpy as np
import pytest

from pynlps.cli import run
from pynlps.utils.io import read_nltf


def _out(tmp_path):
    return ["--set", f"output.dir={tmp_path}"]


def test_solve_linear_writes_artifacts(tmp_path):
    code = run(["solve-linear", "--set", "problem.preset=nonlocal_heat_linear", "--quiet"] + _out(tmp_path))
    assert code == 0
    assert (tmp_path / "field.nltf").exists()
    assert (tmp_path / "field.meta.json").exists()
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["command"] == "solve-linear"
    assert report["report"]["scheme"] == "explicit"


def test_config_file_with_csv(config_dir, tmp_path):
    assert run(["solve-linear", "--config", f"{config_dir}/heat.json", "--quiet"] + _out(tmp_path)) == 0
    assert len(list((tmp_path / "slices").glob("t_*.csv"))) == 65


def test_threads_flag_is_deterministic(tmp_path):
    serial, parallel = tmp_path / "serial", tmp_path / "parallel"
    base = ["solve-linear", "--set", "problem.preset=nonlocal_heat_linear", "--quiet"]
    assert run(base + _out(serial)) == 0
    assert run(base + ["--threads", "4"] + _out(parallel)) == 0
    assert (serial / "field.nltf").read_bytes() == (parallel / "field.nltf").read_bytes()


def test_norms_of_a_stored_field(tmp_path):
    base = ["--set", "problem.preset=nonlocal_heat_linear", "--quiet"]
    assert run(["solve-linear"] + base + _out(tmp_path / "solve")) == 0
    field_path = tmp_path / "solve" / "field.nltf"
    assert run(["norms", "--field", str(field_path)] + base + _out(tmp_path / "norms")) == 0
    report = json.loads((tmp_path / "norms" / "report.json").read_text())
    field, _ = read_nltf(field_path)
    assert report["report"]["sup_norm"] == pytest.approx(float(np.max(np.abs(field.data))))


def test_quasilinearize(tmp_path):
    assert run(["quasilinearize", "--set", "problem.preset=fullnl_exp", "--quiet"] + _out(tmp_path)) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["report"]["induced"]["roles"] == {"0": "u", "1": "v1"}
    assert not (tmp_path / "field.nltf").exists()


def test_unknown_config_key(tmp_path, capsys):
    code = run(["solve-linear", "--set", "problem.preset=nonlocal_heat_linear", "--set", "schme.kind=imex"]
               + _out(tmp_path))
    assert code == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("ERROR ValidationError")
    assert "schme" in err


def test_missing_configuration(capsys):
    assert run(["solve-linear"]) == 1
    assert "ERROR InvalidParameter cli::run" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert run(["solve-wave"]) == 1
    assert capsys.readouterr().err.startswith("ERROR InvalidParameter")


def test_wrong_kind_for_command(tmp_path):
    assert run(["solve-fullnl", "--set", "problem.preset=nonlocal_heat_linear", "--quiet"] + _out(tmp_path)) == 1


def test_cfl_violation_is_a_solver_error(tmp_path, capsys):
    code = run(["solve-linear", "--set", "problem.preset=nonlocal_heat_linear", "--set", "grid.n_tau=8",
                "--set", "grid.n_y=32", "--quiet"] + _out(tmp_path))
    assert code == 2
    assert "ERROR CflViolation" in capsys.readouterr().err


def test_wrong_forcing_fails_the_gate(config_dir, tmp_path, capsys):
    code = run(["verify-mms", "--config", f"{config_dir}/heat_mms_wrong.json", "--quiet"] + _out(tmp_path))
    assert code == 3
    assert "ERROR GateFailure" in capsys.readouterr().err


def test_verify_mms_passes(tmp_path):
    assert run(["verify-mms", "--set", "problem.preset=nonlocal_heat_linear", "--quiet"] + _out(tmp_path)) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["report"]["passed"]


def test_ellipticity_gate_keeps_the_report(tmp_path, capsys):
    code = run(["check-ellipticity", "--set", "problem.preset=heat_negative_B", "--quiet"] + _out(tmp_path))
    assert code == 3
    assert "ERROR GateFailure systems::check_ellipticity" in capsys.readouterr().err
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["report"]["ellipticity"]["worst_case"]["which"] == "combined"
