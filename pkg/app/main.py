from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Callable, Optional, Sequence

from .artifacts import (
    ProfileRequest,
    load_run_artifacts,
    profile_filename,
    report_text,
    write_profile,
    write_run_artifacts,
)
from .assembly import Discretization, assemble_system, dump_matrix
from .config import CaseConfig, config_to_text, read_config, reactor_config
from .crash_logger import init_logging, install_excepthook
from .errors import ConfigError, DivergenceError, DomainError, SolverError, VerificationError
from .mesh import dump_mesh
from .solver import constraint_residual, solve_nonlinear
from .verify import (
    channelling_failures,
    check_global_flux,
    check_matrix_free,
    check_skew_symmetry,
    estimate_continuity,
    min_forchheimer_quadratic_form,
    monotonicity_failures,
    polynomial_case,
    residual_monotonicity_failures,
    reynolds_sweep,
    run_convergence_study,
    smooth_case,
    solution_errors,
    sweep_summary,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_CONVERGED = 2
EXIT_VERIFICATION = 3

SUITES = ("mms", "forms", "flux", "sweep")

SKEW_TOL = 1e-11
SKEW_CONTROL_MIN = 1e-3
MATRIX_FREE_TOL = 1e-11
MMS_MIN_ORDERS = (2.7, 1.8, 1.8)
EXACT_CASE_TOL = 1e-9
CONSTRAINT_TOL = 1e-7
FLUX_IMBALANCE_TOL = 1e-6


class _ArgumentParser(argparse.ArgumentParser):
    # usage errors count as configuration errors (exit 1), not argparse's 2
    def error(self, message: str):
        raise ConfigError([message])


def _float_list(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma separated list of numbers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _default_station(cfg: CaseConfig, x: Optional[float]) -> float:
    # reactor profiles are taken at x = 50; shorter channels use their midpoint
    if x is not None:
        return x
    return 50.0 if cfg.L >= 50.0 else 0.5 * cfg.L


def _load_case(path: Optional[str]) -> CaseConfig:
    return read_config(path) if path else reactor_config()


def _emit(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


# ---------------------------------------------------------------------------
# commands


def cmd_solve(args: argparse.Namespace, logger: logging.Logger) -> int:
    cfg = read_config(args.config)
    logger.info("case %s:\n%s", args.config, config_to_text(cfg).rstrip())
    disc = Discretization(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.dump_mesh:
        logger.info("wrote mesh: %s", dump_mesh(disc.mesh, disc.maps, out / "mesh.dat"))

    try:
        fields, report = solve_nonlinear(disc, logger=logger)
    except DivergenceError as e:
        if e.report is not None:
            (out / "report.txt").write_text(e.report.to_text(), encoding="utf-8")
        raise

    artifacts = write_run_artifacts(
        out,
        disc,
        fields,
        report,
        x_station=_default_station(cfg, args.x),
        n_samples=args.n,
        vtu=not args.no_vtu,
        logger=logger,
    )
    if args.dump_matrix:
        system = assemble_system(disc, fields.velocity)
        logger.info("wrote matrix: %s", dump_matrix(system.operator, out / "matrix.dat"))

    if not report.converged:
        logger.error("solver did not converge: %s (see %s)", report.message, artifacts["report"])
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_profile(args: argparse.Namespace, logger: logging.Logger) -> int:
    loaded = load_run_artifacts(args.in_dir)
    for w in loaded.warnings:
        logger.warning(w)
    request = ProfileRequest(_default_station(loaded.cfg, args.x), args.n, args.quantity)
    request = request.normalized(loaded.cfg.L)
    out = Path(args.out) if args.out else Path(args.in_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = write_profile(out / profile_filename(request.x_station, request.quantity), loaded.fields, request)
    logger.info("wrote profile: %s", path)
    return EXIT_OK


def _verify_forms(args: argparse.Namespace, logger: logging.Logger) -> list[str]:
    failures: list[str] = []
    skew = check_skew_symmetry(trials=args.trials, seed=args.seed)
    logger.info("skew-symmetry: max violation %.3e over %d trials", skew.max_violation, skew.trials)
    if skew.max_violation > SKEW_TOL:
        failures.append(f"skew-symmetry violation {skew.max_violation:.3e} > {SKEW_TOL:g}")
    if skew.max_self_violation > SKEW_TOL:
        failures.append(f"n(w, u, u) = {skew.max_self_violation:.3e} is not zero")

    control = check_skew_symmetry(trials=args.trials, seed=args.seed, negative_control=True)
    logger.info("skew-symmetry negative control: min violation %.3e", control.min_violation)
    if control.min_violation < SKEW_CONTROL_MIN:
        failures.append(f"negative control violation {control.min_violation:.3e} < {SKEW_CONTROL_MIN:g}")

    cfg = read_config(args.config) if args.config else reactor_config(L=6.0, Nx=6, Ny=4)
    disc = Discretization(cfg)
    gap = check_matrix_free(disc, seed=args.seed)
    logger.info("matrix-free cross-check: max relative gap %.3e", gap)
    if gap > MATRIX_FREE_TOL:
        failures.append(f"assembled blocks differ from direct quadrature by {gap:.3e}")

    dmin = min_forchheimer_quadratic_form(disc, seed=args.seed)
    if dmin < -1e-12:
        failures.append(f"forchheimer block is not positive semidefinite (min {dmin:.3e})")

    cont = estimate_continuity(disc, seed=args.seed)
    logger.info(
        "continuity on unit H1 triples: |n| <= %.3e, |d| <= %.3e (%d trials)",
        cont.max_convective, cont.max_forchheimer, cont.trials,
    )
    return failures


def _verify_mms(args: argparse.Namespace, logger: logging.Logger) -> list[str]:
    if args.levels < 3:
        raise ConfigError([f"--levels must be >= 3, got {args.levels}"], key="levels")
    failures: list[str] = []
    exact = polynomial_case()
    disc = Discretization(exact.config(4))
    fields, report = solve_nonlinear(disc, logger=logger)
    if not report.converged:
        raise SolverError(f"polynomial case: {report.message}")
    errs = solution_errors(disc, fields, exact)
    logger.info("polynomial case errors: u L2 %.3e, u H1 %.3e, p L2 %.3e", *errs)
    if max(errs) > EXACT_CASE_TOL:
        failures.append(f"polynomial case is not reproduced exactly (errors {errs})")

    table = run_convergence_study(smooth_case(), levels=args.levels, jobs=args.jobs, logger=logger)
    _emit(table.to_text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "convergence.dat").write_text(table.to_text(), encoding="utf-8")
    for name, order, minimum in zip(("u L2", "u H1", "p L2"), table.final_orders(), MMS_MIN_ORDERS):
        if not order >= minimum:
            failures.append(f"{name} order {order:.3f} < {minimum}")
    return failures


def _verify_flux(args: argparse.Namespace, logger: logging.Logger) -> list[str]:
    cfg = _load_case(args.config)
    disc = Discretization(cfg)
    fields, report = solve_nonlinear(disc, logger=logger)
    if not report.converged:
        raise SolverError(report.message)
    flux = check_global_flux(fields, disc.porosity)
    constraint = constraint_residual(disc, fields)
    _emit(report_text(report, flux, constraint))

    failures: list[str] = []
    if constraint > CONSTRAINT_TOL:
        failures.append(f"constraint residual {constraint:.3e} > {CONSTRAINT_TOL:g}")
    scale = abs(flux.inflow) if flux.inflow != 0.0 else 1.0
    if abs(flux.net) > FLUX_IMBALANCE_TOL * scale:
        failures.append(f"flux imbalance {flux.net:.3e} exceeds {FLUX_IMBALANCE_TOL:g} x inflow")
    return failures


def _verify_sweep(args: argparse.Namespace, logger: logging.Logger) -> list[str]:
    base = _load_case(args.config)
    members = reynolds_sweep(
        base,
        args.re,
        x_station=_default_station(base, args.x),
        jobs=args.jobs,
        out_dir=args.out,
        logger=logger,
    )
    summary = sweep_summary(members)
    _emit(summary)
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        (Path(args.out) / "sweep.dat").write_text(summary, encoding="utf-8")

    stalled = [m.re for m in members if not m.converged]
    if stalled:
        raise SolverError(f"no convergence for Re in {stalled}")
    # recorded, not a verification failure
    for msg in residual_monotonicity_failures(members):
        logger.warning(msg)
    failures = monotonicity_failures(members)
    for m in members:
        failures += channelling_failures(m, base.R)
    return failures


VERIFY_SUITES: dict[str, Callable[[argparse.Namespace, logging.Logger], list[str]]] = {
    "mms": _verify_mms,
    "forms": _verify_forms,
    "flux": _verify_flux,
    "sweep": _verify_sweep,
}


def cmd_verify(args: argparse.Namespace, logger: logging.Logger) -> int:
    failures = VERIFY_SUITES[args.suite](args, logger)
    if failures:
        raise VerificationError(failures)
    logger.info("verify %s: all checks passed", args.suite)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="bedflow", description="brinkman-forchheimer-darcy channel flow solver")
    parser.add_argument("--log-dir", default=None, help="directory for log files (default: ./logs next to the package)")
    parser.add_argument("--verbose", action="store_true", help="debug output on stdout")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_ArgumentParser)

    p = sub.add_parser("solve", help="solve a case and write its artifacts")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--x", type=float, default=None, help="profile station (default 50, or L/2 for short channels)")
    p.add_argument("--n", type=int, default=201, help="profile samples")
    p.add_argument("--no-vtu", action="store_true")
    p.add_argument("--dump-mesh", action="store_true")
    p.add_argument("--dump-matrix", action="store_true")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("profile", help="extract a vertical profile from solve artifacts")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--quantity", default="magnitude", help="magnitude (|u|), u, v or p")
    p.add_argument("--out", default=None, help="output directory (default: the artifacts directory)")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("verify", help="run a verification suite")
    p.add_argument("suite", choices=SUITES)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--re", type=_float_list, default=[5.0, 50.0, 200.0])
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--x", type=float, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)
    return parser


def run_cli(argv: Optional[Sequence[str]] = None) -> int:
    logger = logging.getLogger("bedflow")
    try:
        args = build_parser().parse_args(argv)
        logger = init_logging(args.log_dir, args.verbose)
        install_excepthook(logger)
        return args.func(args, logger)
    except ConfigError as e:
        for msg in e.errors:
            logger.error("%s%s", f"{e.path}: " if e.path else "", msg)
        return EXIT_CONFIG
    except DomainError as e:
        logger.error("%s", e)
        return EXIT_CONFIG
    except OSError as e:
        logger.error("i/o error: %s", e)
        return EXIT_CONFIG
    except DivergenceError as e:
        logger.error("%s", e)
        return EXIT_NOT_CONVERGED
    except SolverError as e:
        logger.error("solver failed: %s", e)
        return EXIT_NOT_CONVERGED
    except VerificationError as e:
        for msg in e.failures:
            logger.error("check failed: %s", msg)
        return EXIT_VERIFICATION


def main() -> None:
    sys.exit(run_cli())
