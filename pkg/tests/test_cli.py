from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import scipy.io

from growthfrag.cli import main, read_csv
from growthfrag.config import OUTPUT_ENV, ConfigSyntaxError, load_config, parse_text

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

FIRST = """
tau.kind = constant
tau.coeffs = 1
beta.kind = power_law
beta.coeffs = 1, 1
kernel.kind = uniform
"""


def _cfg(tmp_path, body, name="run.cfg"):
    p = tmp_path / name
    p.write_text(body)
    return str(p)


@pytest.fixture
def outdir(tmp_path, monkeypatch):
    d = tmp_path / "out"
    monkeypatch.setenv(OUTPUT_ENV, str(d))
    return d


def test_audit_first_example_exit_zero(outdir, capsys):
    assert main(["audit", str(CONFIGS / "first_example.cfg")]) == 0
    rep = json.loads((outdir / "audit" / "audit.json").read_text())
    assert rep["failing_ids"] == [] and rep["schema_version"] == 1
    assert "kappa3" in capsys.readouterr().out


def test_audit_renewal_exit_two(outdir):
    assert main(["audit", str(CONFIGS / "renewal.cfg")]) == 2
    rep = json.loads((outdir / "audit" / "audit.json").read_text())
    assert rep["failing_ids"] == ["kappa3"]


@pytest.mark.parametrize("body", ["this is not a config\n", FIRST + "grid.NN = 10\n",
                                  FIRST + "grid.N = many\n", "tau.kind = constant\n"])
def test_malformed_config_exit_64(tmp_path, outdir, body):
    assert main(["audit", _cfg(tmp_path, body)]) == 64


def test_usage_errors_exit_64(capsys):
    assert main([]) == 64
    assert main(["frobnicate", "x.cfg"]) == 64
    assert main(["solve", "/nonexistent/file.cfg"]) == 64


def test_unknown_keys_rejected():
    with pytest.raises(ConfigSyntaxError, match="grid.RR"):
        parse_text(FIRST + "grid.RR = 3\n")


def test_solve_linear_growth(outdir):
    assert main(["solve", str(CONFIGS / "linear_growth_n1.cfg")]) == 0
    summ = json.loads((outdir / "solve" / "summary.json").read_text())
    assert summ["verdict"] == "converged"
    assert abs(summ["lambda"] - 1.0) < 2e-2
    data = read_csv(outdir / "solve" / "eigentriple.csv")
    assert set(data) == {"x", "U", "phi", "tauU"}
    head = (outdir / "solve" / "eigentriple.csv").read_text().splitlines()[0]
    assert head == "# growthfrag eigentriple csv v1"


def test_solve_affine_growth_exit_three(outdir):
    assert main(["solve", str(CONFIGS / "affine_growth.cfg")]) == 3
    summ = json.loads((outdir / "solve" / "summary.json").read_text())
    assert summ["verdict"] == "diverging_first_moment"


def test_solve_vanishing_growth_exit_three(outdir):
    assert main(["solve", str(CONFIGS / "vanishing_growth.cfg")]) == 3
    summ = json.loads((outdir / "solve" / "summary.json").read_text())
    assert summ["verdict"] == "lambda_not_settling"


def test_strict_audit_blocks_solve(tmp_path, outdir):
    body = (CONFIGS / "renewal.cfg").read_text() + "solver.strict_audit = true\n"
    assert main(["solve", _cfg(tmp_path, body)]) == 2


def test_export_operator(tmp_path, outdir):
    body = FIRST + "grid.R = 10\ngrid.N = 64\nschedule.stages = 1\n"
    assert main(["solve", _cfg(tmp_path, body), "--export-operator"]) == 0
    A = scipy.io.mmread(str(outdir / "solve" / "operator_direct.mtx")).toarray()
    B = scipy.io.mmread(str(outdir / "solve" / "operator_adjoint.mtx")).toarray()
    assert A.shape == (64, 64) and B.shape == (64, 64)
    dx = np.full(64, 10 / 64)
    np.testing.assert_allclose(B, (A.T * dx[None, :]) / dx[:, None], rtol=1e-12, atol=1e-12)


def test_solve_deterministic(tmp_path, monkeypatch):
    body = FIRST + "grid.R = 10\ngrid.N = 200\nschedule.stages = 2\n"
    path = _cfg(tmp_path, body)
    blobs = []
    for k in range(2):
        monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / f"o{k}"))
        assert main(["solve", path]) == 0
        blobs.append((tmp_path / f"o{k}" / "solve" / "eigentriple.csv").read_bytes())
    assert blobs[0] == blobs[1]


def test_manifest_round_trip(tmp_path, monkeypatch):
    body = FIRST + "grid.R = 10\ngrid.N = 200\nschedule.stages = 2\nsolver.seed = 7\n"
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "a"))
    assert main(["solve", _cfg(tmp_path, body)]) == 0
    manifest = tmp_path / "a" / "solve" / "manifest.json"
    m = json.loads(manifest.read_text())
    assert m["command"] == "solve" and m["config"]["grid.N"] == "200"
    assert load_config(manifest).resolved() == m["config"]
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "b"))
    assert main(["solve", str(manifest)]) == 0
    a = (tmp_path / "a" / "solve" / "eigentriple.csv").read_bytes()
    b = (tmp_path / "b" / "solve" / "eigentriple.csv").read_bytes()
    assert a == b


def test_output_dir_from_config_without_env(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    body = FIRST + f"output.dir = {tmp_path / 'cfgout'}\n"
    assert main(["audit", _cfg(tmp_path, body)]) == 0
    assert (tmp_path / "cfgout" / "audit" / "manifest.json").exists()


EVOLVE = FIRST + "grid.R = 20\ngrid.N = 300\nevolve.T = 30\nevolve.u0 = gaussian\n"


def test_evolve_inline_solve(tmp_path, outdir):
    assert main(["evolve", _cfg(tmp_path, EVOLVE + "output.stride = 500\n")]) == 0
    summ = json.loads((outdir / "evolve" / "summary.json").read_text())
    assert summ["H_ratio"] < 1e-3
    led = read_csv(outdir / "evolve" / "ledger.csv")
    assert np.all(np.diff(led["t"]) > 0)
    traj = read_csv(outdir / "evolve" / "trajectory.csv")
    assert np.all(traj["u"] >= 0)


def test_evolve_eigen_start_stays(tmp_path, outdir):
    body = FIRST + "grid.R = 20\ngrid.N = 300\nevolve.T = 5\nevolve.u0 = eigen\nevolve.threshold = 1\n"
    assert main(["evolve", _cfg(tmp_path, body)]) == 0
    summ = json.loads((outdir / "evolve" / "summary.json").read_text())
    assert summ["HT"] < 1e-3


def test_evolve_threshold_missed_exit_one(tmp_path, outdir):
    assert main(["evolve", _cfg(tmp_path, EVOLVE.replace("evolve.T = 30", "evolve.T = 0.5"))]) == 1


def test_evolve_missing_triple_exit_65(tmp_path, outdir):
    body = EVOLVE + "evolve.solve = false\n"
    assert main(["evolve", _cfg(tmp_path, body)]) == 65
    assert main(["evolve", _cfg(tmp_path, EVOLVE), "--triple", str(tmp_path / "nowhere")]) == 65


def test_evolve_from_prior_solve(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "s"))
    assert main(["solve", _cfg(tmp_path, FIRST + "grid.R = 20\ngrid.N = 300\nschedule.stages = 1\n"
                               "schedule.eta = 1e-4\n", "s.cfg")]) == 0
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "e"))
    code = main(["evolve", _cfg(tmp_path, EVOLVE, "e.cfg"), "--triple", str(tmp_path / "s" / "solve")])
    assert code in (0, 1)
    summ = json.loads((tmp_path / "e" / "evolve" / "summary.json").read_text())
    assert summ["H_ratio"] < 1e-2


def test_study_outputs(tmp_path, outdir):
    body = (FIRST.replace("uniform", "mitosis_r") + "grid.R = 20\ngrid.N = 200\nschedule.stages = 2\n"
            "schedule.eta = 1e-4\nstudy.N_list = 200, 400, 800\nstudy.exact_lambda = 1\n"
            "study.sweep_key = kernel.r\nstudy.sweep_values = 0.1, 0.3, 0.5\nstudy.workers = 2\n")
    assert main(["study", _cfg(tmp_path, body)]) == 0
    grid = read_csv(outdir / "study" / "study_grid.csv")
    assert list(grid["N"]) == [200, 400, 800]
    sweep = read_csv(outdir / "study" / "study_sweep.csv")
    assert np.all(np.abs(sweep["lambda"] - 1.0) < 5e-2)
    sched = read_csv(outdir / "study" / "study_schedule.csv")
    assert len(sched["R"]) == 2


def test_study_empty_schedule_exit_65(tmp_path, outdir):
    assert main(["study", _cfg(tmp_path, FIRST + "schedule.stages = 0\n")]) == 65


def test_table1_prints_deviations(capsys):
    assert main(["table1", "--rows", "1,2", "--N", "400", "--R", "15"]) == 0
    out = capsys.readouterr().out
    assert "max deviations" in out
