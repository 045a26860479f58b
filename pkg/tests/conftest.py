from pathlib import Path

import numpy as np
import pytest

from nsch.config import load_config
from nsch.runner import simulate
from nsch.state import build_initial_state, validate_initial_data

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def run_config(name, overrides=(), **kw):
    """Run one shipped config; returns (cfg, admissible data, RunResult)."""
    cfg = load_config(CONFIGS / name, list(overrides))
    adm = validate_initial_data(cfg.initial_data(), cfg.params.potential)
    dt, n = cfg.time_step(adm.u0)
    st = build_initial_state(adm, cfg["potential.eps"], cfg["solver.delta_reg"])
    res = simulate(st, cfg.step_config(dt), cfg.params, n, adm.M_r, **kw)
    return cfg, adm, res


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        tr.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
