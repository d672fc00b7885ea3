from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.sparse.linalg import splu

from .assembly import STOKES_DARCY_TERMS, Discretization, SaddleSystem, assemble_system
from .config import CaseConfig
from .crash_logger import get_logger
from .errors import DivergenceError, SolverError
from .fields import SolutionFields

LINEAR_RESIDUAL_TOL = 1e-10


@dataclass
class NonlinearReport:
    iterations: int = 0
    # residuals[0] belongs to the initial guess
    residuals: list[float] = field(default_factory=list)
    converged: bool = False
    relaxation_events: list[tuple[int, float]] = field(default_factory=list)
    final_relaxation: float = 1.0
    message: str = ""

    @property
    def initial_residual(self) -> float:
        return self.residuals[0] if self.residuals else float("nan")

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def is_monotone(self, skip: int = 0) -> bool:
        # residual decrease from iteration `skip` on
        r = self.residuals[skip:]
        return all(b <= a for a, b in zip(r, r[1:]))

    def monotone_after_relaxation(self) -> bool:
        # at most one relaxation adjustment, non-increasing residual from there on
        if len(self.relaxation_events) > 1:
            return False
        skip = self.relaxation_events[0][0] if self.relaxation_events else 0
        return self.is_monotone(skip)

    def to_text(self) -> str:
        lines = [
            f"converged = {'true' if self.converged else 'false'}",
            f"iterations = {self.iterations}",
            f"initial_residual = {self.initial_residual:.12e}",
            f"final_residual = {self.final_residual:.12e}",
            f"final_relaxation = {self.final_relaxation!r}",
            f"relaxation_events = {len(self.relaxation_events)}",
        ]
        for it, omega in self.relaxation_events:
            lines.append(f"# relaxation reduced to {omega!r} at iteration {it}")
        if self.message:
            lines.append(f"# {self.message}")
        lines.append("# iteration residual")
        lines += [f"{k} {r:.12e}" for k, r in enumerate(self.residuals)]
        return "\n".join(lines) + "\n"


def _discretization(cfg_or_disc: Union[CaseConfig, Discretization]) -> Discretization:
    if isinstance(cfg_or_disc, Discretization):
        return cfg_or_disc
    return Discretization(cfg_or_disc)


def solve_linear(system: SaddleSystem, logger: Optional[logging.Logger] = None) -> np.ndarray:
    log = get_logger(logger)
    if not system.constrained:
        raise SolverError("boundary conditions have not been applied to the system")
    M = system.operator.tocsc()
    rhs = system.rhs
    try:
        lu = splu(M)
    except RuntimeError as e:
        raise SolverError(
            "singular saddle-point matrix: the pressure is not determined; "
            "use the outflow boundary or pin the pressure gauge "
            f"({e})"
        ) from e
    x = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SolverError("linear solve produced non-finite values")

    res = float(np.linalg.norm(M @ x - rhs))
    m_max = float(abs(M).max()) if M.nnz else 0.0
    bound = LINEAR_RESIDUAL_TOL * (float(np.linalg.norm(rhs)) + m_max * float(np.linalg.norm(x)))
    log.debug("linear solve: n=%d nnz=%d residual=%.3e bound=%.3e", M.shape[0], M.nnz, res, bound)
    if res > bound:
        raise SolverError(f"linear solve residual {res:.3e} exceeds {bound:.3e}")
    return x


def _restore_zero_mean(disc: Discretization, system: SaddleSystem, fields: SolutionFields) -> SolutionFields:
    # pinned gauge in enclosed flow: shift to the zero-mean representative
    if system.gauge_dof is None:
        return fields
    p = fields.pressure.copy()
    p[disc.maps.pressure_dofs[:, 0]] -= fields.pressure_field.mean()
    return SolutionFields(fields.mesh, fields.maps, fields.velocity, p)


def solve_stokes_darcy(
    cfg_or_disc: Union[CaseConfig, Discretization], logger: Optional[logging.Logger] = None
) -> SolutionFields:
    disc = _discretization(cfg_or_disc)
    system = assemble_system(disc, None, terms=STOKES_DARCY_TERMS)
    x = solve_linear(system, logger)
    fields = SolutionFields.from_vector(disc.mesh, disc.maps, x)
    return _restore_zero_mean(disc, system, fields)


def picard_step(
    disc: Discretization,
    w: SolutionFields,
    relaxation: float = 1.0,
    logger: Optional[logging.Logger] = None,
) -> SolutionFields:
    # solve A(w; u, v) - b(v, p) + b(u, q) = (f, v), then relax toward the new iterate
    if not w.is_finite():
        raise SolverError("picard iterate is not finite")
    system = assemble_system(disc, w.velocity)
    x_new = solve_linear(system, logger)
    new = _restore_zero_mean(disc, system, SolutionFields.from_vector(disc.mesh, disc.maps, x_new))
    if relaxation == 1.0:
        return new
    x = (1.0 - relaxation) * w.as_vector() + relaxation * new.as_vector()
    return SolutionFields.from_vector(disc.mesh, disc.maps, x)


def residual_vector(disc: Discretization, fields: SolutionFields) -> np.ndarray:
    # dirichlet rows hold x - g; the pinned gauge row of enclosed flows is zeroed
    system = assemble_system(disc, fields.velocity)
    x = fields.as_vector()
    r = system.unconstrained_operator() @ x - system.unconstrained_rhs()
    r[system.dirichlet_dofs] = x[system.dirichlet_dofs] - system.dirichlet_values
    if system.gauge_dof is not None:
        r[system.gauge_dof] = 0.0
    return r


def nonlinear_residual(cfg_or_disc: Union[CaseConfig, Discretization], fields: SolutionFields) -> float:
    return float(np.linalg.norm(residual_vector(_discretization(cfg_or_disc), fields)))


def constraint_residual(cfg_or_disc: Union[CaseConfig, Discretization], fields: SolutionFields) -> float:
    disc = _discretization(cfg_or_disc)
    r = disc.divergence @ fields.velocity
    if disc.dirichlet.pin_pressure:
        r[0] = 0.0
    return float(np.linalg.norm(r))


def solve_nonlinear(
    cfg_or_disc: Union[CaseConfig, Discretization],
    initial: Optional[SolutionFields] = None,
    logger: Optional[logging.Logger] = None,
) -> tuple[SolutionFields, NonlinearReport]:
    log = get_logger(logger)
    disc = _discretization(cfg_or_disc)
    pc = disc.cfg.picard
    log.info(
        "picard solve: Re=%g, %dx%d cells, %d velocity + %d pressure dofs",
        disc.cfg.Re, disc.mesh.Nx, disc.mesh.Ny, disc.maps.n_velocity_dofs, disc.maps.n_pressure_dofs,
    )

    current = solve_stokes_darcy(disc, log) if initial is None else initial
    r0 = nonlinear_residual(disc, current)
    report = NonlinearReport(residuals=[r0], final_relaxation=pc.relaxation)
    target = max(pc.tol_rel * r0, pc.tol_abs)
    log.info("initial residual %.3e, target %.3e", r0, target)

    omega = pc.relaxation
    best_r, best = r0, current
    prev = r0
    for k in range(1, pc.max_iter + 1):
        nxt = picard_step(disc, current, omega, log)
        r = nonlinear_residual(disc, nxt)
        report.residuals.append(r)
        report.iterations = k
        log.debug("picard %3d: residual %.6e (relaxation %g)", k, r, omega)

        if not np.isfinite(r) or (r0 > 0.0 and r > pc.divergence_factor * r0):
            report.message = f"diverged at iteration {k}: residual {r:.3e}"
            raise DivergenceError(report.message, report)
        if r < best_r:
            best_r, best = r, nxt
        if r <= target:
            report.converged = True
            current = nxt
            break
        if r > prev:
            if len(report.relaxation_events) >= pc.max_relaxation_events:
                report.message = f"residual increased at iteration {k} after {len(report.relaxation_events)} relaxation adjustments"
                raise DivergenceError(report.message, report)
            omega = min(omega, pc.reduced_relaxation)
            report.relaxation_events.append((k, omega))
            report.final_relaxation = omega
            log.warning("residual increased at iteration %d, relaxation reduced to %g", k, omega)
        current, prev = nxt, r

    if report.converged:
        log.info("picard converged in %d iterations, residual %.3e", report.iterations, report.final_residual)
        return current, report

    report.message = f"no convergence in {pc.max_iter} iterations; returning best iterate (residual {best_r:.3e})"
    log.warning(report.message)
    return best, report
