# manufactured velocities are u* = eps^-1 curl psi, so div(eps u*) = 0 identically
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np
import sympy as sym
from numpy.polynomial import polynomial as npoly
from scipy.signal import convolve2d

from .assembly import (
    Discretization,
    FluxReport,
    assemble_h1_gram,
    boundary_flux,
    eval_form_a,
    eval_form_b,
    eval_form_c,
    eval_form_d,
    eval_form_n,
)
from .config import CaseConfig, PicardConfig
from .crash_logger import get_logger
from .errors import DomainError, SolverError
from .fields import (
    CellQuadrature,
    FEPressure,
    FEVelocity,
    PolynomialScalarField,
    PolynomialVectorField,
    ScalarField,
    SolutionFields,
    VectorField,
    interpolate_velocity,
    project_pressure,
)
from .mesh import StructuredQuadMesh
from .solver import residual_vector, solve_nonlinear

X, Y = sym.symbols("x y", real=True)


def _lambdify(expr) -> Callable:
    f = sym.lambdify((X, Y), expr, "numpy")

    def g(x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        return np.broadcast_to(np.asarray(f(x, y), dtype=float), shape).copy()

    return g


def scalar_field_from_expr(expr) -> ScalarField:
    value = _lambdify(expr)
    dx, dy = _lambdify(sym.diff(expr, X)), _lambdify(sym.diff(expr, Y))
    return ScalarField(value, lambda x, y: np.stack([dx(x, y), dy(x, y)], axis=-1))


def vector_field_from_exprs(ux, uy) -> VectorField:
    comps = [_lambdify(ux), _lambdify(uy)]
    grads = [[_lambdify(sym.diff(c, v)) for v in (X, Y)] for c in (ux, uy)]

    def value(x, y):
        return np.stack([c(x, y) for c in comps], axis=-1)

    def gradient(x, y):
        return np.stack([np.stack([g(x, y) for g in row], axis=-1) for row in grads], axis=-2)

    return VectorField(value, gradient)


@dataclass(frozen=True)
class DivFreeField:
    ux: sym.Expr
    uy: sym.Expr

    @cached_property
    def field(self) -> VectorField:
        return vector_field_from_exprs(self.ux, self.uy)


def make_divfree_field(psi, eps) -> DivFreeField:
    # u* = eps^-1 (d psi/dy, -d psi/dx); sympy applies the quotient rule
    psi, eps = sym.sympify(psi), sym.sympify(eps)
    return DivFreeField(ux=sym.diff(psi, Y) / eps, uy=-sym.diff(psi, X) / eps)


def eps_divergence(u: DivFreeField, eps):
    eps = sym.sympify(eps)
    return sym.diff(eps * u.ux, X) + sym.diff(eps * u.uy, Y)


@dataclass(frozen=True)
class ManufacturedCase:
    psi: sym.Expr
    eps: sym.Expr
    pressure: sym.Expr
    L: float = 1.0
    R: float = 0.5
    name: str = "manufactured"

    @cached_property
    def velocity(self) -> DivFreeField:
        return make_divfree_field(self.psi, self.eps)

    @cached_property
    def exact_velocity(self) -> VectorField:
        return self.velocity.field

    @cached_property
    def exact_pressure(self) -> ScalarField:
        return scalar_field_from_expr(sym.sympify(self.pressure))

    @cached_property
    def porosity(self) -> ScalarField:
        return scalar_field_from_expr(sym.sympify(self.eps))

    def forcing(self, re: float) -> VectorField:
        return mms_forcing(self, re)

    def config(self, n: int, re: float = 1.0, quad_order: int = 3, picard: Optional[PicardConfig] = None) -> CaseConfig:
        # enclosed flow: u* prescribed on all of the boundary
        return CaseConfig(
            L=self.L,
            R=self.R,
            Nx=n,
            Ny=n,
            Re=re,
            ramp=self.R,
            forcing=self.forcing(re),
            outflow=False,
            quad_order=quad_order,
            picard=picard or PicardConfig(),
            porosity=self.porosity,
            boundary_velocity=self.exact_velocity,
        )


def mms_forcing(case: ManufacturedCase, re: float) -> VectorField:
    # f = -div((eps/Re) grad u - eps u (x) u) + eps grad p + (alpha/Re) u + beta u |u|
    eps = sym.sympify(case.eps)
    p = sym.sympify(case.pressure)
    u = (case.velocity.ux, case.velocity.uy)
    kappa = (1 - eps) / eps
    alpha, beta = 150 * kappa**2, sym.Rational(7, 4) * kappa
    speed = sym.sqrt(u[0] ** 2 + u[1] ** 2)
    coords = (X, Y)
    f = []
    for i in range(2):
        viscous = -sum(sym.diff(eps / re * sym.diff(u[i], xj), xj) for xj in coords)
        convective = sum(sym.diff(eps * u[i] * u[j], coords[j]) for j in range(2))
        drag = alpha / re * u[i] + beta * u[i] * speed
        f.append(viscous + convective + eps * sym.diff(p, coords[i]) + drag)
    comps = [_lambdify(fi) for fi in f]
    return VectorField(lambda x, y: np.stack([c(x, y) for c in comps], axis=-1))


def smooth_case() -> ManufacturedCase:
    # psi and grad psi vanish on the boundary of (0,1)x(-1/2,1/2)
    psi = (sym.sin(sym.pi * X) * sym.cos(sym.pi * Y)) ** 2
    eps = sym.Rational(3, 5) + sym.Rational(1, 5) * X + sym.Rational(2, 5) * Y**2
    pressure = sym.cos(sym.pi * X) * sym.sin(sym.pi * Y)
    return ManufacturedCase(psi=psi, eps=eps, pressure=pressure, name="smooth")


def polynomial_case() -> ManufacturedCase:
    # velocity quadratic, pressure linear: exactly representable by the element pair
    psi = X**2 * Y / 2 + X * Y**2 / 4 - Y**3 / 6
    pressure = X - sym.Rational(1, 2) + Y / 2
    return ManufacturedCase(psi=psi, eps=sym.Integer(1), pressure=pressure, name="polynomial")


@dataclass(frozen=True)
class LevelErrors:
    h: float
    u_l2: float
    u_h1: float
    p_l2: float
    iterations: int = 0


def _orders(values: Sequence[float]) -> list[float]:
    return [math.log2(a / b) if a > 0 and b > 0 else float("nan") for a, b in zip(values, values[1:])]


@dataclass
class ConvergenceTable:
    levels: list[LevelErrors] = field(default_factory=list)

    @property
    def u_l2_orders(self) -> list[float]:
        return _orders([lv.u_l2 for lv in self.levels])

    @property
    def u_h1_orders(self) -> list[float]:
        return _orders([lv.u_h1 for lv in self.levels])

    @property
    def p_l2_orders(self) -> list[float]:
        return _orders([lv.p_l2 for lv in self.levels])

    def final_orders(self) -> tuple[float, float, float]:
        return self.u_l2_orders[-1], self.u_h1_orders[-1], self.p_l2_orders[-1]

    def to_text(self) -> str:
        lines = ["# h  err_u_L2  order  err_u_H1  order  err_p_L2  order"]
        orders = (self.u_l2_orders, self.u_h1_orders, self.p_l2_orders)
        for k, lv in enumerate(self.levels):
            o = ["-" if k == 0 else f"{seq[k - 1]:.3f}" for seq in orders]
            lines.append(f"{lv.h:.6e}  {lv.u_l2:.6e}  {o[0]}  {lv.u_h1:.6e}  {o[1]}  {lv.p_l2:.6e}  {o[2]}")
        return "\n".join(lines) + "\n"


def solution_errors(disc: Discretization, fields: SolutionFields, case: ManufacturedCase) -> tuple[float, float, float]:
    # two gauss points per direction above the assembly rule
    quad = CellQuadrature(disc.mesh, min(disc.cfg.quad_order + 2, 10))
    uh, guh = fields.velocity_field.sample(quad)
    ue, gue = case.exact_velocity.sample(quad)
    ph, _ = fields.pressure_field.sample(quad)
    pe, _ = case.exact_pressure.sample(quad)
    area = disc.mesh.L * 2.0 * disc.mesh.R
    dp = (ph - quad.integrate(ph) / area) - (pe - quad.integrate(pe) / area)
    return (
        math.sqrt(quad.integrate(np.sum((uh - ue) ** 2, axis=-1))),
        math.sqrt(quad.integrate(np.sum((guh - gue) ** 2, axis=(-2, -1)))),
        math.sqrt(quad.integrate(dp * dp)),
    )


def _solve_level(case: ManufacturedCase, n: int, re: float, quad_order: int, logger) -> LevelErrors:
    disc = Discretization(case.config(n, re, quad_order))
    try:
        fields, report = solve_nonlinear(disc, logger=logger)
    except SolverError as e:
        raise SolverError(f"level with {n}x{n} cells: {e}") from e
    if not report.converged:
        raise SolverError(f"level with {n}x{n} cells: {report.message}")
    u_l2, u_h1, p_l2 = solution_errors(disc, fields, case)
    return LevelErrors(h=max(disc.mesh.hx, disc.mesh.hy), u_l2=u_l2, u_h1=u_h1, p_l2=p_l2, iterations=report.iterations)


def run_convergence_study(
    case: ManufacturedCase,
    levels: int = 4,
    base: int = 4,
    re: float = 1.0,
    quad_order: int = 3,
    jobs: int = 1,
    logger: Optional[logging.Logger] = None,
) -> ConvergenceTable:
    log = get_logger(logger)
    if levels < 3:
        raise DomainError("a convergence study needs at least 3 levels")
    sizes = [base * 2**k for k in range(levels)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda n: _solve_level(case, n, re, quad_order, log), sizes))
    else:
        rows = [_solve_level(case, n, re, quad_order, log) for n in sizes]
    table = ConvergenceTable(levels=rows)
    log.info("convergence study '%s':\n%s", case.name, table.to_text().rstrip())
    return table


def interpolation_residual(case: ManufacturedCase, n: int, re: float = 1.0, quad_order: int = 3) -> float:
    disc = Discretization(case.config(n, re, quad_order))
    u = interpolate_velocity(disc.maps, case.exact_velocity)
    p = project_pressure(disc.quad, disc.maps, case.exact_pressure)
    fields = SolutionFields(disc.mesh, disc.maps, u, p)
    return float(np.linalg.norm(residual_vector(disc, fields)))


# ---------------------------------------------------------------------------
# skew-symmetry of the convective form


@dataclass(frozen=True)
class SkewReport:
    max_violation: float
    min_violation: float
    max_self_violation: float
    trials: int


def _random_porosity(rng: np.random.Generator, L: float, R: float) -> PolynomialScalarField:
    # 0.7 + 0.15 a (2x/L - 1) + 0.15 b y/R with |a|, |b| <= 1 stays in [0.4, 1]
    a, b = rng.uniform(-1.0, 1.0, size=2)
    c = np.zeros((2, 2))
    c[0, 0] = 0.7 - 0.15 * a
    c[1, 0] = 0.3 * a / L
    c[0, 1] = 0.15 * b / R
    return PolynomialScalarField(c)


def _weighted_curl_field(psi: np.ndarray, eps: PolynomialScalarField) -> VectorField:
    psi_x = npoly.polyder(psi, axis=0)
    psi_y = npoly.polyder(psi, axis=1)

    def value(x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        curl = np.stack([npoly.polyval2d(x, y, psi_y), -npoly.polyval2d(x, y, psi_x)], axis=-1)
        return curl / eps.value(x, y)[..., None]

    return VectorField(value)


def _random_vector_poly(rng: np.random.Generator) -> PolynomialVectorField:
    return PolynomialVectorField(rng.uniform(-1.0, 1.0, (3, 3)), rng.uniform(-1.0, 1.0, (3, 3)))


def check_skew_symmetry(
    trials: int = 50,
    seed: int = 0,
    negative_control: bool = False,
    L: float = 1.0,
    R: float = 0.5,
    cells: int = 2,
    quad_order: int = 6,
) -> SkewReport:
    # |n(w,u,v) + n(w,v,u)| / (1 + |n(w,u,v)|) for w = eps^-1 curl psi; psi carries
    # (x(L-x))^2 (R^2-y^2)^2 so w vanishes on the boundary. the negative control
    # uses psi = x (y + R) and u = v = (1 + y, 0)
    rng = np.random.default_rng(seed)
    quad = CellQuadrature(StructuredQuadMesh(L=L, R=R, Nx=cells, Ny=cells), quad_order)
    bx = npoly.polypow([0.0, L, -1.0], 2)
    by = npoly.polypow([R * R, 0.0, -1.0], 2)
    bubble = np.outer(bx, by)

    violations, self_violations = [], []
    for _ in range(trials):
        eps = _random_porosity(rng, L, R)
        if negative_control:
            psi = np.array([[0.0, 0.0], [R, 1.0]])
        else:
            psi = convolve2d(bubble, rng.uniform(-1.0, 1.0, (2, 2)))
        w = _weighted_curl_field(psi, eps)
        if negative_control:
            u = v = PolynomialVectorField([[1.0, 1.0]], [[0.0]])
        else:
            u, v = _random_vector_poly(rng), _random_vector_poly(rng)
        n_uv = eval_form_n(quad, w, u, v, eps)
        n_vu = eval_form_n(quad, w, v, u, eps)
        n_uu = eval_form_n(quad, w, u, u, eps)
        violations.append(abs(n_uv + n_vu) / (1.0 + abs(n_uv)))
        self_violations.append(abs(n_uu) / (1.0 + abs(n_uv)))
    return SkewReport(
        max_violation=max(violations),
        min_violation=min(violations),
        max_self_violation=max(self_violations),
        trials=trials,
    )


# ---------------------------------------------------------------------------
# discrete checks on assembled operators


def check_global_flux(fields: SolutionFields, porosity) -> FluxReport:
    vel = fields.velocity_field
    return boundary_flux(fields.mesh, lambda tag, x, y: vel.evaluate(x, y), porosity)


def _random_coeffs(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, n)


def check_matrix_free(disc: Discretization, trials: int = 5, seed: int = 0) -> float:
    # largest relative gap between v^T (assembled block) u and direct form quadrature
    rng = np.random.default_rng(seed)
    mesh, maps, quad, eps, re = disc.mesh, disc.maps, disc.quad, disc.porosity, disc.cfg.Re
    worst = 0.0
    for _ in range(trials):
        cu, cv, cw = (_random_coeffs(rng, maps.n_velocity_dofs) for _ in range(3))
        cq = _random_coeffs(rng, maps.n_pressure_dofs)
        u, v, w = (FEVelocity(mesh, maps, c) for c in (cu, cv, cw))
        q = FEPressure(mesh, maps, cq)
        pairs = [
            (cv @ (disc.viscous @ cu), eval_form_a(quad, u, v, eps, re)),
            (cv @ (disc.darcy @ cu), eval_form_c(quad, u, v, eps, re)),
            (cv @ (disc.convection(cw) @ cu), eval_form_n(quad, w, u, v, eps)),
            (cv @ (disc.forchheimer(cw) @ cu), eval_form_d(quad, w, u, v, eps)),
            (cq @ (disc.divergence @ cu), eval_form_b(quad, u, q, eps)),
        ]
        for assembled, direct in pairs:
            scale = max(abs(assembled), abs(direct), 1e-300)
            worst = max(worst, abs(assembled - direct) / scale)
    return worst


@dataclass(frozen=True)
class ContinuityEstimate:
    max_convective: float
    max_forchheimer: float
    trials: int


def estimate_continuity(disc: Discretization, trials: int = 100, seed: int = 0) -> ContinuityEstimate:
    # largest |n(w,u,v)| and |d(w;u,v)| over random FE triples of unit H1 norm
    rng = np.random.default_rng(seed)
    mass, stiff = assemble_h1_gram(disc.quad, disc.maps)
    gram = mass + stiff

    def unit(c: np.ndarray) -> np.ndarray:
        return c / math.sqrt(float(c @ (gram @ c)))

    n_max = d_max = 0.0
    for _ in range(trials):
        cu, cv, cw = (unit(_random_coeffs(rng, disc.maps.n_velocity_dofs)) for _ in range(3))
        n_max = max(n_max, abs(float(cv @ (disc.convection(cw) @ cu))))
        d_max = max(d_max, abs(float(cv @ (disc.forchheimer(cw) @ cu))))
    return ContinuityEstimate(max_convective=n_max, max_forchheimer=d_max, trials=trials)


def min_forchheimer_quadratic_form(disc: Discretization, trials: int = 10, seed: int = 0) -> float:
    # min over random w, u of u^T D(w) u / |u|^2 (nonnegative up to roundoff)
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(trials):
        D = disc.forchheimer(_random_coeffs(rng, disc.maps.n_velocity_dofs))
        for _ in range(trials):
            u = _random_coeffs(rng, disc.maps.n_velocity_dofs)
            worst = min(worst, float(u @ (D @ u)) / float(u @ u))
    return worst


def h1_norm(disc: Discretization, velocity: np.ndarray) -> float:
    mass, stiff = assemble_h1_gram(disc.quad, disc.maps)
    return math.sqrt(float(velocity @ ((mass + stiff) @ velocity)))


def check_initial_guess_independence(
    cfg: CaseConfig, seed: int = 0, perturbation: float = 1.0, logger: Optional[logging.Logger] = None
) -> float:
    # relative H1 distance between the fixed points from the stokes-darcy guess and a perturbed one
    disc = Discretization(cfg)
    first, rep1 = solve_nonlinear(disc, logger=logger)
    rng = np.random.default_rng(seed)
    scale = perturbation * max(float(np.max(np.abs(first.velocity))), 1e-300)
    guess = SolutionFields(
        disc.mesh,
        disc.maps,
        first.velocity + scale * rng.uniform(-1.0, 1.0, disc.maps.n_velocity_dofs),
        first.pressure.copy(),
    )
    second, rep2 = solve_nonlinear(disc, initial=guess, logger=logger)
    if not (rep1.converged and rep2.converged):
        raise SolverError("small-data solve did not converge")
    return h1_norm(disc, first.velocity - second.velocity) / h1_norm(disc, first.velocity)


# ---------------------------------------------------------------------------
# reynolds sweep of the packed-bed reactor


@dataclass(frozen=True)
class SweepMember:
    re: float
    y: np.ndarray
    speed: np.ndarray
    iterations: int
    converged: bool
    monotone: bool = True

    @property
    def max_speed(self) -> float:
        return float(np.max(self.speed))


def _sweep_member(args: tuple[CaseConfig, float, int, Optional[str]]) -> SweepMember:
    from .artifacts import sample_profile, write_run_artifacts

    cfg, x_station, n_samples, out_dir = args
    disc = Discretization(cfg)
    fields, report = solve_nonlinear(disc)
    y, speed = sample_profile(fields, x_station, n_samples, "magnitude")
    if out_dir is not None:
        write_run_artifacts(out_dir, disc, fields, report, x_station=x_station, n_samples=n_samples)
    return SweepMember(
        re=cfg.Re,
        y=y,
        speed=speed,
        iterations=report.iterations,
        converged=report.converged,
        monotone=report.monotone_after_relaxation(),
    )


def reynolds_sweep(
    base: CaseConfig,
    reynolds: Sequence[float],
    x_station: float = 50.0,
    n_samples: int = 201,
    jobs: int = 1,
    out_dir: Optional[Union[str, Path]] = None,
    logger: Optional[logging.Logger] = None,
) -> list[SweepMember]:
    log = get_logger(logger)
    tasks = []
    for re in reynolds:
        sub = None if out_dir is None else str(Path(out_dir) / f"re_{re:g}")
        tasks.append((base.with_(Re=float(re)), x_station, n_samples, sub))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            members = list(pool.map(_sweep_member, tasks))
    else:
        members = [_sweep_member(t) for t in tasks]
    for m in members:
        log.info("Re=%g: max|u|=%.6f, %d iterations, converged=%s", m.re, m.max_speed, m.iterations, m.converged)
    return members


def sweep_summary(members: Sequence[SweepMember]) -> str:
    lines = ["# Re  max|u|  iterations"]
    lines += [f"{m.re:g}  {m.max_speed:.12e}  {m.iterations}" for m in members]
    return "\n".join(lines) + "\n"


def channelling_failures(member: SweepMember, R: float, band: float = 1.0) -> list[str]:
    # the |u| profile must peak within `band` of each wall, above the centerline value
    failures: list[str] = []
    y, s = member.y, member.speed
    center = float(np.interp(0.0, y, s))
    for name, mask in (("lower", y < 0.0), ("upper", y > 0.0)):
        k = int(np.argmax(np.where(mask, s, -np.inf)))
        if R - abs(y[k]) > band:
            failures.append(f"Re={member.re:g}: {name} maximum at y={y[k]:.3f} is farther than {band} from the wall")
        if not s[k] > center:
            failures.append(f"Re={member.re:g}: {name} maximum {s[k]:.6f} does not exceed centerline {center:.6f}")
    return failures


def residual_monotonicity_failures(members: Sequence[SweepMember]) -> list[str]:
    return [
        f"Re={m.re:g}: picard residual not monotone after the first relaxation adjustment"
        for m in members
        if not m.monotone
    ]


def monotonicity_failures(members: Sequence[SweepMember]) -> list[str]:
    ordered = sorted(members, key=lambda m: m.re)
    failures = []
    for a, b in zip(ordered, ordered[1:]):
        if not b.max_speed < a.max_speed:
            failures.append(f"max|u| does not decrease from Re={a.re:g} ({a.max_speed:.6f}) to Re={b.re:g} ({b.max_speed:.6f})")
    return failures
