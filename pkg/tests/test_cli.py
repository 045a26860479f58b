import json
import subprocess
import sys

import pytest

from nsch.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, main

from conftest import CONFIGS

SMALL = """grid.dim = 1
grid.cells = 16
grid.lengths = 8
potential.eps = 0.1
initial.preset = advection
time.T = 0.4
time.dt = 0.04
output.snapshot_every = 1
"""


def test_verify_potential_passes(capsys):
    assert main(["verify-potential", "--theta", "1", "--theta0", "2", "--eps", "0.1"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "all checks passed" in out and "FAIL" not in out


def test_verify_potential_bad_parameters(capsys):
    assert main(["verify-potential", "--theta", "2", "--theta0", "1", "--eps", "0.1"]) == EXIT_INVALID


def test_missing_config_is_runtime_error(capsys):
    assert main(["run", "--config", "missing.cfg"]) == EXIT_RUNTIME
    assert "missing.cfg" in capsys.readouterr().err


def test_usage_errors():
    assert main(["bogus"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE
    assert main(["run"]) == EXIT_USAGE


def test_validate_initial_rejects_pure_phase(capsys):
    assert main(["validate-initial", "--config", str(CONFIGS / "pure_phase.cfg")]) == EXIT_INVALID
    assert "constant K" in capsys.readouterr().out


def test_validate_initial_accepts(capsys):
    assert main(["validate-initial", "--config", str(CONFIGS / "advection_1d.cfg")]) == EXIT_OK
    assert "M_r" in capsys.readouterr().out


def test_invalid_config_lists_every_error(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(SMALL + "physics.gamma = 1.2\nphysics.theta = 3\n")
    assert main(["run", "--config", str(p)]) == EXIT_INVALID
    err = capsys.readouterr().err
    assert "gamma > 3/2" in err and "0 < theta < theta0" in err


def test_help_config(capsys):
    assert main(["--help-config"]) == EXIT_OK
    assert "solver.energy_tol_factor" in capsys.readouterr().out


def test_run_then_check_weakform(tmp_path, capsys):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    out = tmp_path / "run"
    assert main(["run", "--config", str(p), "--out", str(out)]) == EXIT_OK
    for name in ("config.cfg", "diagnostics.csv", "meta.json", "energy.png", "fields.png"):
        assert (out / name).is_file(), name
    meta = json.loads((out / "meta.json").read_text())
    assert meta["snapshots"] == list(range(11))
    assert "energy audit: pass" in capsys.readouterr().out
    code = main(["check-weakform", "--traj", str(out), "--refinements", "1"])
    text = capsys.readouterr().out
    assert "minimum observed order" in text and "WF5" in text
    low = float(text.split("minimum observed order:")[1])
    assert code == (EXIT_OK if low >= 1.0 else EXIT_INVALID)


def test_check_weakform_missing_dir(tmp_path):
    assert main(["check-weakform", "--traj", str(tmp_path / "nope")]) == EXIT_RUNTIME


def test_sweep_command(tmp_path, capsys):
    p = tmp_path / "s.cfg"
    p.write_text(SMALL.replace("advection", "uniform\ninitial.c = 0.2") + "potential.schedule = 0.1,0.01\n")
    assert main(["sweep", "--config", str(p), "--out", str(tmp_path / "sw"), "--no-plots"]) == EXIT_OK
    assert (tmp_path / "sw" / "sweep_report.csv").is_file()
    assert "members: 2, failed: 0" in capsys.readouterr().out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "nsch", "verify-potential", "--theta", "0.5", "--theta0", "1",
                        "--eps", "0.01"], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
