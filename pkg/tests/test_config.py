import pytest

from app.config import (
    CaseConfig,
    ConstantForcing,
    PicardConfig,
    config_errors,
    config_to_text,
    parse_config_text,
    read_config,
    reactor_config,
    validate_config,
    write_config,
)
from app.errors import ConfigError
from app.fields import ConstantScalar

REACTOR_TEXT = """
# fixed bed
l = 60
r = 5
nx = 120
ny = 40
re = 50
eps_inf = 0.45
u_in = 1
u_w = 0
"""


def test_reactor_case():
    cfg = reactor_config()
    assert (cfg.L, cfg.R, cfg.Nx, cfg.Ny, cfg.Re) == (60.0, 5.0, 120, 40, 50.0)
    assert (cfg.eps_inf, cfg.decay, cfg.u_in, cfg.u_w, cfg.ramp) == (0.45, 6.0, 1.0, 0.0, 1.0)
    assert cfg.quad_order == 4
    assert cfg.picard.relaxation == 0.7
    assert cfg.outflow
    assert config_errors(cfg) == []


def test_with_routes_picard_keys():
    cfg = CaseConfig().with_(Re=5.0, picard_max_iter=7, picard_tol_rel=1e-6)
    assert cfg.Re == 5.0
    assert cfg.picard == PicardConfig(max_iter=7, tol_rel=1e-6)


@pytest.mark.parametrize(
    "changes, message",
    [
        (dict(Nx=0), "Nx must be ≥ 1"),
        (dict(Ny=-2), "Ny must be ≥ 1"),
        (dict(L=0.0), "L must be > 0"),
        (dict(Re=-1.0), "Re must be > 0"),
        (dict(eps_inf=0.0), "eps_inf must lie in (0, 1]"),
        (dict(ramp=6.0), "ramp must satisfy 0 < ramp ≤ R"),
        (dict(inlet_profile="plug"), "inlet_profile must be one of trapezoid, parabolic"),
        (dict(quad_order=11), "quad_order must lie in 1..10"),
        (dict(picard_relaxation=0.0), "picard_relaxation must lie in (0, 1]"),
    ],
)
def test_invalid_values_are_named(changes, message):
    cfg = CaseConfig().with_(**changes)
    assert message in config_errors(cfg)
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert message in exc.value.errors


def test_enclosed_flow_requires_flux_compatibility():
    with pytest.raises(ConfigError, match="flux compatibility"):
        validate_config(CaseConfig(L=4.0, R=1.0, Nx=4, Ny=2, outflow=False))


def test_enclosed_flow_with_compatible_data():
    cfg = CaseConfig(L=4.0, R=1.0, Nx=4, Ny=2, u_in=0.0, outflow=False)
    assert validate_config(cfg) is cfg


def test_custom_porosity_must_stay_in_unit_interval():
    cfg = CaseConfig(L=1.0, R=0.5, Nx=2, Ny=2, ramp=0.5, porosity=ConstantScalar(1.2))
    assert "porosity must satisfy 0 < eps ≤ 1 on the domain" in config_errors(cfg)


def test_parse_reactor_text():
    cfg = parse_config_text(REACTOR_TEXT)
    assert cfg.L == 60.0 and cfg.Nx == 120 and cfg.Re == 50.0
    assert cfg.decay == 6.0
    assert cfg.forcing == ConstantForcing()


def test_parse_optional_keys():
    text = REACTOR_TEXT + "outflow = yes\ninlet_profile = parabolic\nforcing_x = 0.5\npicard_max_iter = 12\n"
    cfg = parse_config_text(text)
    assert cfg.outflow is True
    assert cfg.inlet_profile == "parabolic"
    assert cfg.forcing == ConstantForcing(0.5, 0.0)
    assert cfg.picard.max_iter == 12


def test_missing_key_is_named():
    text = REACTOR_TEXT.replace("nx = 120\n", "")
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text, source="case.cfg")
    assert exc.value.key == "nx"
    assert "nx" in str(exc.value)
    assert "case.cfg" in str(exc.value)


@pytest.mark.parametrize(
    "extra, key",
    [("colour = red\n", "colour"), ("re = 10\n", "re"), ("outflow = maybe\n", "outflow"), ("nx = 1.5\n", "nx")],
)
def test_bad_lines_are_reported_with_key(extra, key):
    text = REACTOR_TEXT.replace("nx = 120\n", "") + ("nx = 120\n" if key != "nx" else "") + extra
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    assert exc.value.key == key
    assert "line" in str(exc.value)


def test_line_without_assignment():
    with pytest.raises(ConfigError, match="expected 'name = value'"):
        parse_config_text(REACTOR_TEXT + "just words\n")


def test_read_missing_file(tmp_path):
    with pytest.raises(ConfigError) as exc:
        read_config(tmp_path / "nope.cfg")
    assert exc.value.path.endswith("nope.cfg")


def test_write_then_read(tmp_path):
    cfg = reactor_config(Re=200.0, u_w=0.1, inlet_profile="parabolic", forcing=ConstantForcing(0.0, -1.0))
    back = read_config(write_config(cfg, tmp_path / "config.txt"))
    assert back == cfg


def test_no_determinism_switch():
    with pytest.raises(ConfigError) as exc:
        parse_config_text(REACTOR_TEXT + "deterministic = true\n")
    assert exc.value.key == "deterministic"
    assert "deterministic" not in config_to_text(reactor_config())
