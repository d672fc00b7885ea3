import numpy as np
import pytest
import sympy as sym

from app.assembly import Discretization
from app.config import reactor_config
from app.errors import DomainError
from app.solver import solve_nonlinear
from app.verify import (
    X,
    Y,
    ConvergenceTable,
    LevelErrors,
    SweepMember,
    channelling_failures,
    check_initial_guess_independence,
    check_matrix_free,
    check_skew_symmetry,
    eps_divergence,
    estimate_continuity,
    interpolation_residual,
    make_divfree_field,
    min_forchheimer_quadratic_form,
    monotonicity_failures,
    polynomial_case,
    run_convergence_study,
    smooth_case,
    solution_errors,
    sweep_summary,
)


@pytest.fixture(scope="module")
def small_disc():
    return Discretization(reactor_config(L=6.0, Nx=6, Ny=8))


def test_weighted_curl_is_eps_divergence_free():
    psi = sym.sin(X) * Y**3 + X**2 * Y
    eps = sym.Rational(1, 2) + X * Y**2 / 10
    u = make_divfree_field(psi, eps)
    assert sym.simplify(eps_divergence(u, eps)) == 0


def test_divfree_field_evaluates_on_arrays():
    u = make_divfree_field(X**2 * Y, sym.Integer(1))
    vals = u.field.value(np.array([1.0, 2.0]), np.array([3.0, 0.5]))
    # curl psi = (x^2, -2 x y)
    np.testing.assert_allclose(vals, [[1.0, -6.0], [4.0, -2.0]])
    grads = u.field.gradient(np.array([1.0]), np.array([3.0]))
    np.testing.assert_allclose(grads[0], [[2.0, 0.0], [-6.0, -2.0]])


def test_skew_symmetry_of_convective_form():
    report = check_skew_symmetry(trials=50, seed=7)
    assert report.trials == 50
    assert report.max_violation <= 1e-11
    assert report.max_self_violation <= 1e-11


def test_skew_symmetry_negative_control():
    report = check_skew_symmetry(trials=50, seed=7, negative_control=True)
    assert report.min_violation >= 1e-3


def test_assembled_blocks_match_direct_quadrature(small_disc):
    assert check_matrix_free(small_disc, trials=3) <= 1e-11


def test_forchheimer_block_is_positive_semidefinite(small_disc):
    assert min_forchheimer_quadratic_form(small_disc, trials=4) >= -1e-12


def test_continuity_estimates_are_finite(small_disc):
    est = estimate_continuity(small_disc, trials=20)
    assert est.trials == 20
    assert 0.0 < est.max_convective < np.inf
    assert 0.0 < est.max_forchheimer < np.inf


@pytest.mark.parametrize("n", [2, 4])
def test_polynomial_case_is_reproduced(n):
    case = polynomial_case()
    disc = Discretization(case.config(n))
    fields, report = solve_nonlinear(disc)
    assert report.converged
    assert max(solution_errors(disc, fields, case)) <= 1e-9
    assert abs(fields.pressure_field.mean()) <= 1e-12


def test_interpolated_exact_solution_residual_decreases():
    case = smooth_case()
    r = [interpolation_residual(case, n) for n in (4, 8, 16)]
    assert r[0] > r[1] > r[2]


@pytest.fixture(scope="module")
def smooth_table():
    return run_convergence_study(smooth_case(), levels=4, base=4)


def test_convergence_orders(smooth_table):
    u_l2, u_h1, p_l2 = smooth_table.final_orders()
    assert u_l2 >= 2.7
    assert u_h1 >= 1.8
    assert p_l2 >= 1.8
    errors = [lv.u_l2 for lv in smooth_table.levels]
    assert all(a > b > 0.0 for a, b in zip(errors, errors[1:]))


def test_convergence_table_text(smooth_table):
    lines = smooth_table.to_text().splitlines()
    assert lines[0] == "# h  err_u_L2  order  err_u_H1  order  err_p_L2  order"
    assert len(lines) == 5
    first = lines[1].split()
    assert first[2] == first[4] == first[6] == "-"
    assert float(lines[2].split()[0]) == pytest.approx(0.125)


def test_convergence_table_orders():
    table = ConvergenceTable([LevelErrors(0.5, 8.0, 4.0, 4.0), LevelErrors(0.25, 1.0, 1.0, 1.0)])
    assert table.final_orders() == pytest.approx((3.0, 2.0, 2.0))


def test_convergence_study_needs_three_levels():
    with pytest.raises(DomainError, match="3 levels"):
        run_convergence_study(polynomial_case(), levels=2)


def test_small_data_fixed_point_is_unique():
    cfg = reactor_config(L=12.0, Nx=24, Ny=40, u_in=0.01)
    assert check_initial_guess_independence(cfg, seed=3) <= 1e-6


def _member(re, speed_fn):
    y = np.linspace(-5.0, 5.0, 201)
    return SweepMember(re=re, y=y, speed=speed_fn(y), iterations=4, converged=True)


def test_channelling_check_accepts_wall_peaks():
    m = _member(50.0, lambda y: 1.0 + 0.5 * np.exp(-8.0 * (4.6 - np.abs(y)) ** 2) - 0.5 * (np.abs(y) / 5.0) ** 40)
    assert channelling_failures(m, 5.0) == []


def test_channelling_check_rejects_centre_peak():
    m = _member(50.0, lambda y: 1.0 - (y / 5.0) ** 2)
    failures = channelling_failures(m, 5.0)
    assert len(failures) == 4


def test_monotonicity_check():
    members = [_member(re, lambda y, s=s: s * (1.0 - (y / 5.0) ** 2)) for re, s in ((50.0, 1.2), (5.0, 1.5), (200.0, 1.1))]
    assert monotonicity_failures(members) == []
    members.append(_member(500.0, lambda y: 1.3 * (1.0 - (y / 5.0) ** 2)))
    assert len(monotonicity_failures(members)) == 1


def test_sweep_summary():
    text = sweep_summary([_member(5.0, lambda y: 2.0 - (y / 5.0) ** 2)])
    assert text.splitlines() == ["# Re  max|u|  iterations", f"5  {2.0:.12e}  4"]
