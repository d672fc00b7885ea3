from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .assembly import Discretization, FluxReport
from .config import CaseConfig, porosity_field, read_config, write_config
from .crash_logger import get_logger
from .errors import ConfigError, DomainError
from .fields import SolutionFields
from .mesh import build_dof_maps, build_mesh
from .solver import NonlinearReport, constraint_residual

CONFIG_FILE = "config.txt"
FIELDS_FILE = "fields.dat"
SOLUTION_FILE = "solution.npz"
POROSITY_FILE = "porosity.dat"
REPORT_FILE = "report.txt"
VTU_FILE = "fields.vtu"

# quantity name -> file suffix; magnitude profiles carry none
QUANTITIES = {"magnitude": "", "u": "_u", "v": "_v", "p": "_p"}
QUANTITY_ALIASES = {"|u|": "magnitude", "speed": "magnitude", "mag": "magnitude"}


def _fmt(v: float) -> str:
    return f"{v:.12e}"


@dataclass(frozen=True)
class ProfileRequest:
    x_station: float = 50.0
    samples: int = 201
    quantity: str = "magnitude"

    def normalized(self, L: float) -> "ProfileRequest":
        q = QUANTITY_ALIASES.get(self.quantity, self.quantity)
        if q not in QUANTITIES:
            raise DomainError(f"unknown profile quantity {self.quantity!r}; expected one of {', '.join(QUANTITIES)}")
        if not (0.0 <= self.x_station <= L):
            raise DomainError(f"x-station {self.x_station!r} outside [0, {L!r}]")
        if self.samples < 2:
            raise DomainError(f"sample count must be >= 2, got {self.samples}")
        return ProfileRequest(self.x_station, self.samples, q)


def profile_filename(x_station: float, quantity: str = "magnitude") -> str:
    q = QUANTITY_ALIASES.get(quantity, quantity)
    return f"profile_x{x_station:g}{QUANTITIES[q]}.dat"


def sample_profile(fields: SolutionFields, x_station: float, samples: int = 201, quantity: str = "magnitude"):
    # y uniform in [-R, R]
    req = ProfileRequest(x_station, samples, quantity).normalized(fields.mesh.L)
    R = fields.mesh.R
    y = np.linspace(-R, R, req.samples)
    x = np.full_like(y, req.x_station)
    if req.quantity == "p":
        return y, fields.pressure_field.evaluate(x, y)
    u = fields.velocity_field.evaluate(x, y)
    if req.quantity == "u":
        return y, u[:, 0]
    if req.quantity == "v":
        return y, u[:, 1]
    return y, np.linalg.norm(u, axis=1)


def write_columns(path: Union[str, Path], header: list[str], columns: list[np.ndarray]) -> Path:
    p = Path(path)
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        for h in header:
            fh.write(f"# {h}\n")
        for row in zip(*columns):
            fh.write(" ".join(_fmt(float(v)) for v in row) + "\n")
    return p


def read_columns(path: Union[str, Path]) -> np.ndarray:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        rows.append([float(t) for t in line.split()])
    return np.array(rows)


def write_profile(path: Union[str, Path], fields: SolutionFields, request: ProfileRequest) -> Path:
    req = request.normalized(fields.mesh.L)
    y, values = sample_profile(fields, req.x_station, req.samples, req.quantity)
    header = [f"quantity = {req.quantity}, x = {req.x_station!r}, samples = {req.samples}", "y value"]
    return write_columns(path, header, [y, values])


def write_fields(path: Union[str, Path], fields: SolutionFields) -> Path:
    # pressure is cellwise; shared nodes take the lower-index cell
    maps = fields.maps
    uv = fields.nodal_velocity()
    p = fields.pressure_field.evaluate(maps.node_x, maps.node_y)
    return write_columns(path, ["x y u v p"], [maps.node_x, maps.node_y, uv[:, 0], uv[:, 1], p])


def write_porosity(path: Union[str, Path], cfg: CaseConfig, samples: int = 201, x: float = 0.0) -> Path:
    y = np.linspace(-cfg.R, cfg.R, samples)
    eps = np.asarray(porosity_field(cfg).value(np.full_like(y, x), y), dtype=float)
    return write_columns(path, ["y eps"], [y, eps])


def write_solution(path: Union[str, Path], fields: SolutionFields) -> Path:
    p = Path(path)
    np.savez(p, velocity=fields.velocity, pressure=fields.pressure)
    return p


def report_text(report: NonlinearReport, flux: FluxReport, constraint: float) -> str:
    lines = [report.to_text().rstrip("\n")]
    lines.append(f"constraint_residual = {constraint:.12e}")
    for tag, value in flux.segments.items():
        lines.append(f"flux_{tag} = {value:.12e}")
    lines.append(f"flux_net = {flux.net:.12e}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class RunArtifacts:
    out_dir: Path
    files: dict[str, Path]
    warnings: list[str] = field(default_factory=list)

    def __getitem__(self, name: str) -> Path:
        return self.files[name]


def write_run_artifacts(
    out_dir: Union[str, Path],
    disc: Discretization,
    fields: SolutionFields,
    report: NonlinearReport,
    x_station: float = 50.0,
    n_samples: int = 201,
    vtu: bool = True,
    logger: Optional[logging.Logger] = None,
) -> RunArtifacts:
    from .verify import check_global_flux

    log = get_logger(logger)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    warnings: list[str] = []
    files: dict[str, Path] = {}

    files["config"] = write_config(disc.cfg, out / CONFIG_FILE)
    files["fields"] = write_fields(out / FIELDS_FILE, fields)
    files["solution"] = write_solution(out / SOLUTION_FILE, fields)

    x_por = min(max(x_station, 0.0), disc.mesh.L)
    files["porosity"] = write_porosity(out / POROSITY_FILE, disc.cfg, n_samples, x_por)

    if 0.0 <= x_station <= disc.mesh.L:
        files["profile"] = write_profile(out / profile_filename(x_station), fields, ProfileRequest(x_station, n_samples))
    else:
        warnings.append(f"profile station x={x_station!r} outside the channel; no profile written")

    flux = check_global_flux(fields, disc.porosity)
    constraint = constraint_residual(disc, fields)
    files["report"] = out / REPORT_FILE
    files["report"].write_text(report_text(report, flux, constraint), encoding="utf-8")

    if vtu:
        from .vtk_export import write_vtu

        try:
            files["vtu"] = write_vtu(out / VTU_FILE, fields, disc.porosity)
        except Exception as e:
            warnings.append(f"vtu export failed: {e}")

    for name, path in files.items():
        log.info("wrote %s: %s", name, path)
    for w in warnings:
        log.warning(w)
    return RunArtifacts(out_dir=out, files=files, warnings=warnings)


@dataclass(frozen=True)
class LoadResult:
    cfg: CaseConfig
    fields: SolutionFields
    warnings: list[str]


def load_run_artifacts(in_dir: Union[str, Path]) -> LoadResult:
    d = Path(in_dir)
    if not d.is_dir():
        raise ConfigError([f"artifacts directory not found: {d}"], path=str(d))
    cfg = read_config(d / CONFIG_FILE)
    sol = d / SOLUTION_FILE
    if not sol.is_file():
        raise ConfigError([f"missing {SOLUTION_FILE}"], path=str(d))

    warnings: list[str] = []
    if "# porosity: custom field" in (d / CONFIG_FILE).read_text(encoding="utf-8"):
        warnings.append("run used a custom porosity field; the reloaded config carries the default profile")

    mesh = build_mesh(cfg, validate=False)
    maps = build_dof_maps(mesh)
    with np.load(sol) as data:
        velocity = np.array(data["velocity"], dtype=float)
        pressure = np.array(data["pressure"], dtype=float)
    if velocity.shape != (maps.n_velocity_dofs,) or pressure.shape != (maps.n_pressure_dofs,):
        raise ConfigError(
            [f"{SOLUTION_FILE} does not match the {mesh.Nx}x{mesh.Ny} mesh of {CONFIG_FILE}"], path=str(sol)
        )
    return LoadResult(cfg=cfg, fields=SolutionFields(mesh, maps, velocity, pressure), warnings=warnings)
