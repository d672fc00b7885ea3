from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .errors import ConfigError
from .model import PorosityModel

INLET_PROFILES = ("trapezoid", "parabolic")

# tolerance of the eps-weighted flux compatibility check in enclosed-flow mode
FLUX_COMPAT_TOL = 1e-10


@dataclass(frozen=True)
class ConstantForcing:
    fx: float = 0.0
    fy: float = 0.0

    def __call__(self, x, y) -> np.ndarray:
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        out = np.empty(shape + (2,))
        out[..., 0] = self.fx
        out[..., 1] = self.fy
        return out


@dataclass(frozen=True)
class PicardConfig:
    tol_rel: float = 1e-8
    tol_abs: float = 1e-10
    max_iter: int = 50
    relaxation: float = 1.0
    # cap on the relaxation factor after a residual increase
    reduced_relaxation: float = 0.7
    max_relaxation_events: int = 2
    divergence_factor: float = 1e6


@dataclass(frozen=True)
class CaseConfig:
    # lengths in pellet diameters
    L: float = 60.0
    R: float = 5.0
    Nx: int = 120
    Ny: int = 40
    Re: float = 50.0
    eps_inf: float = 0.45
    decay: float = 6.0
    u_in: float = 1.0
    u_w: float = 0.0
    ramp: float = 1.0
    forcing: Callable[[Any, Any], np.ndarray] = field(default_factory=ConstantForcing)
    inlet_profile: str = "trapezoid"
    outflow: bool = True
    quad_order: int = 3
    picard: PicardConfig = field(default_factory=PicardConfig)
    # python-only overrides used by manufactured-solution runs
    porosity: Optional[Any] = None
    boundary_velocity: Optional[Any] = None

    def with_(self, **changes: Any) -> "CaseConfig":
        picard_changes = {k[len("picard_"):]: changes.pop(k) for k in list(changes) if k.startswith("picard_")}
        cfg = replace(self, **changes)
        if picard_changes:
            cfg = replace(cfg, picard=replace(cfg.picard, **picard_changes))
        return cfg


def reactor_config(**overrides: Any) -> CaseConfig:
    # packed-bed production case: higher quadrature for the exponential porosity,
    # damped picard for the forchheimer-dominated regime
    base = CaseConfig(quad_order=4, picard=PicardConfig(relaxation=0.7))
    return base.with_(**overrides) if overrides else base


def porosity_field(cfg: CaseConfig):
    if cfg.porosity is not None:
        return cfg.porosity
    return PorosityModel(eps_inf=cfg.eps_inf, decay=cfg.decay, R=cfg.R)


def _positive(v: float) -> bool:
    return isinstance(v, (int, float)) and math.isfinite(v) and v > 0


def config_errors(cfg: CaseConfig) -> list[str]:
    errors: list[str] = []
    if not _positive(cfg.L):
        errors.append("L must be > 0")
    if not _positive(cfg.R):
        errors.append("R must be > 0")
    if not isinstance(cfg.Nx, int) or cfg.Nx < 1:
        errors.append("Nx must be ≥ 1")
    if not isinstance(cfg.Ny, int) or cfg.Ny < 1:
        errors.append("Ny must be ≥ 1")
    if not _positive(cfg.Re):
        errors.append("Re must be > 0")
    if not (isinstance(cfg.eps_inf, (int, float)) and 0.0 < cfg.eps_inf <= 1.0):
        errors.append("eps_inf must lie in (0, 1]")
    if not _positive(cfg.decay):
        errors.append("decay must be > 0")
    if not (_positive(cfg.ramp) and (not _positive(cfg.R) or cfg.ramp <= cfg.R)):
        errors.append("ramp must satisfy 0 < ramp ≤ R")
    for name in ("u_in", "u_w"):
        v = getattr(cfg, name)
        if not (isinstance(v, (int, float)) and math.isfinite(v)):
            errors.append(f"{name} must be a finite number")
    if cfg.inlet_profile not in INLET_PROFILES:
        errors.append(f"inlet_profile must be one of {', '.join(INLET_PROFILES)}")
    if not isinstance(cfg.quad_order, int) or not (1 <= cfg.quad_order <= 10):
        errors.append("quad_order must lie in 1..10")
    if not callable(cfg.forcing):
        errors.append("forcing must be callable")

    p = cfg.picard
    if not _positive(p.tol_rel):
        errors.append("picard_tol_rel must be > 0")
    if not _positive(p.tol_abs):
        errors.append("picard_tol_abs must be > 0")
    if not isinstance(p.max_iter, int) or p.max_iter < 1:
        errors.append("picard_max_iter must be ≥ 1")
    if not (isinstance(p.relaxation, (int, float)) and 0.0 < p.relaxation <= 1.0):
        errors.append("picard_relaxation must lie in (0, 1]")
    if not (isinstance(p.reduced_relaxation, (int, float)) and 0.0 < p.reduced_relaxation <= 1.0):
        errors.append("picard reduced_relaxation must lie in (0, 1]")

    if errors:
        return errors

    errors.extend(_porosity_bound_errors(cfg))
    if not cfg.outflow and not errors:
        errors.extend(_compatibility_errors(cfg))
    return errors


def _porosity_bound_errors(cfg: CaseConfig) -> list[str]:
    # assumption (A1): 0 < eps <= 1 on the closed domain, sampled on a fine grid
    if cfg.porosity is None:
        return []
    xs = np.linspace(0.0, cfg.L, 41)
    ys = np.linspace(-cfg.R, cfg.R, 41)
    X, Y = np.meshgrid(xs, ys)
    try:
        eps = np.asarray(cfg.porosity.value(X, Y), dtype=float)
    except Exception as e:
        return [f"porosity field could not be evaluated: {e}"]
    if not np.all(np.isfinite(eps)) or eps.min() <= 0.0 or eps.max() > 1.0:
        return ["porosity must satisfy 0 < eps ≤ 1 on the domain"]
    return []


def _compatibility_errors(cfg: CaseConfig) -> list[str]:
    from .assembly import boundary_flux, dirichlet_data
    from .mesh import build_mesh

    mesh = build_mesh(cfg, validate=False)
    flux = boundary_flux(mesh, dirichlet_data(cfg).velocity_on_boundary, porosity_field(cfg))
    scale = 1.0 + sum(abs(v) for v in flux.segments.values())
    if abs(flux.net) > FLUX_COMPAT_TOL * scale:
        return [f"enclosed-flow boundary data violate flux compatibility: net eps-weighted flux {flux.net:.3e}"]
    return []


def validate_config(cfg: CaseConfig) -> CaseConfig:
    errors = config_errors(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


# config file keys -> (attribute, parser); picard_* keys go into the nested PicardConfig
def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


FILE_KEYS: dict[str, tuple[str, Callable[[str], Any]]] = {
    "l": ("L", float),
    "r": ("R", float),
    "nx": ("Nx", int),
    "ny": ("Ny", int),
    "re": ("Re", float),
    "eps_inf": ("eps_inf", float),
    "decay": ("decay", float),
    "u_in": ("u_in", float),
    "u_w": ("u_w", float),
    "ramp": ("ramp", float),
    "forcing_x": ("forcing_x", float),
    "forcing_y": ("forcing_y", float),
    "inlet_profile": ("inlet_profile", str),
    "outflow": ("outflow", _parse_bool),
    "quad_order": ("quad_order", int),
    "picard_tol_rel": ("picard_tol_rel", float),
    "picard_tol_abs": ("picard_tol_abs", float),
    "picard_max_iter": ("picard_max_iter", int),
    "picard_relaxation": ("picard_relaxation", float),
}

REQUIRED_KEYS = ("l", "r", "nx", "ny", "re", "eps_inf", "u_in", "u_w")


def parse_config_text(text: str, source: str = "<string>") -> CaseConfig:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError([f"line {lineno}: expected 'name = value'"], path=source)
        key, _, value = line.partition("=")
        key = key.strip().lower()
        value = value.strip()
        if key not in FILE_KEYS:
            raise ConfigError([f"line {lineno}: unknown key '{key}'"], path=source, key=key)
        if key in values:
            raise ConfigError([f"line {lineno}: duplicate key '{key}'"], path=source, key=key)
        _, parse = FILE_KEYS[key]
        try:
            values[key] = parse(value)
        except ValueError:
            raise ConfigError([f"line {lineno}: invalid value for '{key}': {value!r}"], path=source, key=key) from None

    for key in REQUIRED_KEYS:
        if key not in values:
            raise ConfigError([f"missing required key '{key}'"], path=source, key=key)

    changes: dict[str, Any] = {}
    fx = values.pop("forcing_x", 0.0)
    fy = values.pop("forcing_y", 0.0)
    for key, v in values.items():
        changes[FILE_KEYS[key][0]] = v
    cfg = CaseConfig(forcing=ConstantForcing(fx, fy)).with_(**changes)

    errors = config_errors(cfg)
    if errors:
        raise ConfigError(errors, path=source)
    return cfg


def read_config(path: str | Path) -> CaseConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError([f"cannot read config: {e.strerror or e}"], path=str(p)) from e
    return parse_config_text(text, source=str(p))


def config_to_text(cfg: CaseConfig) -> str:
    lines = ["# bedflow case configuration"]
    plain = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for key, (attr, _) in FILE_KEYS.items():
        if attr.startswith("picard_"):
            v = getattr(cfg.picard, attr[len("picard_"):])
        elif attr in ("forcing_x", "forcing_y"):
            if not isinstance(cfg.forcing, ConstantForcing):
                continue
            v = cfg.forcing.fx if attr == "forcing_x" else cfg.forcing.fy
        else:
            v = plain[attr]
        if isinstance(v, bool):
            text = "true" if v else "false"
        elif isinstance(v, float):
            text = repr(v)
        else:
            text = str(v)
        lines.append(f"{key} = {text}")
    if not isinstance(cfg.forcing, ConstantForcing):
        lines.append("# forcing: custom callable, not representable in this format")
    if cfg.porosity is not None:
        lines.append("# porosity: custom field, not representable in this format")
    return "\n".join(lines) + "\n"


def write_config(cfg: CaseConfig, path: str | Path) -> Path:
    p = Path(path)
    p.write_text(config_to_text(cfg), encoding="utf-8")
    return p
