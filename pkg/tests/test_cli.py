import json
import shutil
import subprocess

import pytest

from conftest import CONFIGS, load_raw
from stokes_biot import cli, schemes


def write_cfg(tmp_path, raw, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(raw))
    return p


def test_run_success(tmp_path, capsys):
    code = cli.main(["run", str(CONFIGS / "artery.json"), "--mesh-h", "0.1", "--max-steps", "16",
                     "--out-dir", str(tmp_path)])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["steps"] == 16 and summary["finalTime"] == pytest.approx(1.6e-3)
    assert (tmp_path / "log.csv").exists() and (tmp_path / "snapshot_0.0015.vtk").exists()


def test_run_scheme_and_tau_override(tmp_path, capsys):
    code = cli.main(["run", str(CONFIGS / "artery.json"), "--mesh-h", "0.1", "--max-steps", "2", "--tau", "5e-5",
                     "--scheme", "algoA", "--out-dir", str(tmp_path), "--dump-matrix"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["finalTime"] == pytest.approx(1e-4)
    assert (tmp_path / "A_mono.mtx").exists()


def test_reservoir_run_reports_peak(tmp_path, capsys):
    code = cli.main(["run", str(CONFIGS / "reservoir.json"), "--max-steps", "3", "--out-dir", str(tmp_path)])
    assert code == 0
    assert "pressurePeak" in json.loads(capsys.readouterr().out)


def test_missing_key_exit_2(tmp_path, capsys):
    raw = load_raw("artery.json")
    del raw["physParams"]["mu_f"]
    assert cli.main(["run", str(write_cfg(tmp_path, raw))]) == 2
    assert "physParams.mu_f" in capsys.readouterr().err


def test_invalid_invariant_exit_2(tmp_path, capsys):
    raw = load_raw("artery.json")
    raw["nitscheParams"]["gamma_f"] = -3
    assert cli.main(["audit", str(write_cfg(tmp_path, raw))]) == 2
    assert "NitscheParams" in capsys.readouterr().err


def test_missing_file_exit_2(tmp_path):
    assert cli.main(["run", str(tmp_path / "none.json")]) == 2


def test_bad_tau_ref_exit_2(tmp_path, capsys):
    code = cli.main(["convergence", str(CONFIGS / "artery_convergence.json"), "--tau-ref", "1e-3",
                     "--out-dir", str(tmp_path)])
    assert code == 2
    assert "reference" in capsys.readouterr().err


def test_solver_failure_exit_3(tmp_path, monkeypatch, capsys):
    def fail(prob, state, **kw):
        raise schemes.SolverFailure("pivot breakdown", step=state.n + 1, substep="darcy")

    monkeypatch.setitem(schemes.STEPPERS, "algoB", fail)
    code = cli.main(["run", str(CONFIGS / "artery.json"), "--mesh-h", "0.25", "--scheme", "algoB",
                     "--max-steps", "2", "--out-dir", str(tmp_path)])
    assert code == 3
    assert "step 1 (darcy)" in capsys.readouterr().err


def test_precond_writes_table(tmp_path, capsys):
    raw = load_raw("artery_precond.json")
    raw["precond"].update(hList=[0.25], steps=2)
    code = cli.main(["precond", str(write_cfg(tmp_path, raw)), "--out-dir", str(tmp_path)])
    assert code == 0
    text = (tmp_path / "precond.csv").read_text()
    assert text.startswith("# git-rev=") and "gmresPrec" in text


def test_convergence_writes_table(tmp_path):
    raw = load_raw("artery_convergence.json")
    raw["convergence"].update(h=0.25, levels=2, T=2e-4, tauRef=2.5e-5)
    code = cli.main(["convergence", str(write_cfg(tmp_path, raw)), "--out-dir", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "convergence.csv").read_text().splitlines()
    assert "tau_ref=2.5e-05" in lines[0] and lines[1].startswith("scheme,tau,E_f,rate_f")
    assert len(lines) == 2 + 4


def test_audit_json(capsys):
    assert cli.main(["audit", str(CONFIGS / "artery.json"), "--mesh-h", "0.25"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert all(r["passed"] for r in report)


@pytest.mark.skipif(shutil.which("sbl") is None, reason="console script not installed")
def test_console_script(tmp_path):
    raw = load_raw("artery.json")
    del raw["tau"]
    out = subprocess.run(["sbl", "run", str(write_cfg(tmp_path, raw))], capture_output=True, text=True)
    assert out.returncode == 2 and "tau" in out.stderr
