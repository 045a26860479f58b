import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsch.config import KEYS, ConfigError, help_config, load_config, parse_config
from nsch.state import COND_GAMMA, COND_THERMO

from conftest import CONFIGS

MINIMAL = "grid.dim = 1\ngrid.cells = 16\ngrid.lengths = 4\ntime.T = 1\n"


def errors_of(text, overrides=None):
    with pytest.raises(ConfigError) as exc:
        parse_config(text, overrides)
    return exc.value.errors


def test_minimal_config_gets_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg["initial.preset"] == "uniform"
    assert cfg["physics.gamma"] == 2.0 and cfg["potential.eps"] == 0.01
    assert cfg.time_step() == (0.05, 20)


def test_gamma_rejected_with_condition():
    errs = errors_of(MINIMAL + "physics.gamma = 1.2\n")
    assert any(COND_GAMMA in e for e in errs)


def test_thermodynamic_condition():
    errs = errors_of(MINIMAL + "physics.theta = 2\nphysics.theta0 = 1\n")
    assert any(COND_THERMO in e for e in errs)


def test_all_errors_reported_together():
    errs = errors_of("grid.dim = 3\nbogus.key = 1\nphysics.gamma = 1.0\ntime.T = -1\nnot a line\n")
    text = "\n".join(errs)
    for frag in ("grid.dim", "bogus.key", COND_GAMMA, "time.T", "expected", "grid.cells: required"):
        assert frag in text


def test_overrides_and_render_round_trip():
    cfg = parse_config(MINIMAL, ["potential.eps = 0.2", "time.dt = auto"])
    assert cfg["potential.eps"] == 0.2 and cfg["time.dt"] == "auto"
    back = parse_config(cfg.render())
    assert back.values == cfg.values


def test_auto_time_step_respects_cfl():
    cfg = parse_config(MINIMAL + "time.dt = auto\ntime.cfl = 0.25\ntime.dt_max = 1\n")
    import numpy as np
    u = (np.full(17, 2.0),)
    u[0][[0, -1]] = 0.0
    dt, n = cfg.time_step(u)
    assert dt * n == pytest.approx(1.0) and dt <= 0.25 / (2.0 / 0.25) + 1e-15


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.name)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.grid.dim == cfg["grid.dim"]


def test_help_lists_every_key():
    text = help_config()
    assert all(k.name in text for k in KEYS)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.01, 0.49), st.floats(1.51, 5.0), st.integers(2, 500))
def test_valid_values_round_trip(eps, gamma, n):
    cfg = parse_config(MINIMAL, [f"potential.eps = {eps!r}", f"physics.gamma = {gamma!r}", f"grid.cells = {n}"])
    assert parse_config(cfg.render()).values == cfg.values
