import numpy as np
import pytest

from app.errors import DomainError
from app.model import (
    PhysicalParams,
    PorosityModel,
    alpha_beta,
    dimensionless_drag,
    ergun_sigma,
    kappa,
    nondimensional_sigma,
    porosity_at,
    porosity_gradient,
    reynolds,
)


def test_coefficient_laws_at_half():
    alpha, beta = alpha_beta(0.5)
    assert abs(alpha - 150.0) <= 1e-14 * 150.0
    assert abs(beta - 1.75) <= 1e-14


def test_kappa_bulk_porosity():
    assert kappa(0.45) == pytest.approx(11.0 / 9.0, abs=1e-14)


def test_kappa_vanishes_for_clear_fluid():
    assert kappa(1.0) == 0.0
    assert alpha_beta(1.0) == (0.0, 0.0)


def test_coefficients_accept_arrays():
    eps = np.array([0.4, 0.5, 1.0])
    alpha, beta = alpha_beta(eps)
    k = (1.0 - eps) / eps
    np.testing.assert_allclose(alpha, 150.0 * k**2, rtol=1e-14)
    np.testing.assert_allclose(beta, 1.75 * k, rtol=1e-14)


@pytest.mark.parametrize("eps", [0.0, -0.1, 1.2, np.nan])
def test_porosity_outside_domain_rejected(eps):
    with pytest.raises(DomainError):
        kappa(eps)


def test_porosity_outside_domain_rejected_inside_array():
    with pytest.raises(DomainError):
        alpha_beta(np.array([0.5, 0.0]))


@pytest.fixture
def bed():
    return PorosityModel(eps_inf=0.45, decay=6.0, R=5.0)


def test_porosity_wall_value_is_exactly_one(bed):
    assert porosity_at(5.0, bed) == 1.0
    assert porosity_at(-5.0, bed) == 1.0


def test_porosity_core_value(bed):
    assert abs(porosity_at(0.0, bed) - 0.45) <= 1e-12


def test_porosity_symmetric_and_monotone(bed):
    y = np.linspace(0.0, 5.0, 101)
    eps = porosity_at(y, bed)
    np.testing.assert_array_equal(eps, porosity_at(-y, bed))
    assert np.all(np.diff(eps) > 0.0)
    assert np.all((eps > 0.0) & (eps <= 1.0))


def test_porosity_independent_of_x(bed):
    assert bed.value(0.0, 2.5) == bed.value(37.0, 2.5)


def test_porosity_outside_channel_rejected(bed):
    with pytest.raises(DomainError):
        porosity_at(5.1, bed)


def test_porosity_gradient_matches_difference_quotient(bed):
    y = np.array([-4.8, -4.0, 3.5, 4.9])
    h = 1e-6
    fd = (porosity_at(y + h, bed) - porosity_at(y - h, bed)) / (2.0 * h)
    np.testing.assert_allclose(porosity_gradient(y, bed), fd, rtol=1e-6, atol=1e-9)


def test_porosity_gradient_zero_on_axis(bed):
    assert porosity_gradient(0.0, bed) == 0.0
    g = bed.gradient(np.array([1.0, 2.0]), np.array([3.0, -3.0]))
    assert g.shape == (2, 2)
    np.testing.assert_array_equal(g[:, 0], 0.0)
    assert g[0, 1] > 0.0 > g[1, 1]


@pytest.mark.parametrize("kwargs", [dict(eps_inf=0.0), dict(eps_inf=1.5), dict(decay=0.0), dict(R=-1.0)])
def test_porosity_model_validates(kwargs):
    params = dict(eps_inf=0.45, decay=6.0, R=5.0)
    params.update(kwargs)
    with pytest.raises(DomainError):
        PorosityModel(**params)


def test_scaled_ergun_drag_is_dimensionless_drag():
    phys = PhysicalParams(U0=0.3, d_p=0.004, nu=1.5e-5)
    u = np.array([[1.0, 0.0], [0.2, -0.5], [0.0, 0.0]])
    eps = np.array([0.45, 0.6, 0.9])
    np.testing.assert_allclose(
        nondimensional_sigma(u, eps, phys), dimensionless_drag(u, eps, reynolds(phys)), rtol=1e-12, atol=1e-14
    )


def test_ergun_drag_linear_and_quadratic_parts():
    phys = PhysicalParams(U0=1.0, d_p=2.0, nu=0.5)
    u = np.array([3.0, 4.0])
    eps = 0.5
    expected = 150.0 * 0.5 * 0.25 / (0.25 * 4.0) * u + 1.75 * 0.5 / (0.5 * 2.0) * u * 5.0
    np.testing.assert_allclose(ergun_sigma(u, eps, phys), expected, rtol=1e-14)


def test_physical_params_validated():
    with pytest.raises(DomainError):
        PhysicalParams(U0=1.0, d_p=0.0, nu=1.0)


def test_coefficients_decrease_with_porosity():
    eps = np.linspace(0.01, 1.0, 100)
    alpha, beta = alpha_beta(eps)
    assert np.all(np.diff(kappa(eps)) < 0.0)
    assert np.all(np.diff(alpha) < 0.0)
    assert np.all(np.diff(beta) < 0.0)


@pytest.mark.parametrize("U0, d_p, nu, expected", [(1.0, 1.0, 1.0, 1.0), (2.0, 3.0, 0.5, 12.0)])
def test_reynolds(U0, d_p, nu, expected):
    assert reynolds(PhysicalParams(U0=U0, d_p=d_p, nu=nu)) == pytest.approx(expected, rel=1e-15)


def test_reynolds_scales_with_reference_speed():
    base = reynolds(PhysicalParams(U0=0.3, d_p=0.004, nu=1.5e-5))
    assert reynolds(PhysicalParams(U0=0.9, d_p=0.004, nu=1.5e-5)) == pytest.approx(3.0 * base, rel=1e-14)


def test_ergun_drag_vanishes_without_flow_or_solid():
    phys = PhysicalParams(U0=0.3, d_p=0.004, nu=1.5e-5)
    np.testing.assert_array_equal(ergun_sigma(np.zeros(2), 0.45, phys), 0.0)
    u = np.array([[1.0, -2.0], [0.3, 0.4]])
    np.testing.assert_array_equal(ergun_sigma(u, 1.0, phys), 0.0)
    np.testing.assert_array_equal(nondimensional_sigma(u, 1.0, phys), 0.0)
    np.testing.assert_array_equal(dimensionless_drag(u, 1.0, 50.0), 0.0)


def test_scaled_ergun_drag_on_random_samples():
    rng = np.random.default_rng(7)
    for _ in range(20):
        phys = PhysicalParams(
            U0=rng.uniform(0.01, 2.0), d_p=rng.uniform(1e-4, 1e-2), nu=rng.uniform(1e-6, 1e-4), rho=rng.uniform(0.5, 1000.0)
        )
        u = rng.uniform(-2.0, 2.0, size=2)
        eps = rng.uniform(0.3, 1.0)
        got = nondimensional_sigma(u, eps, phys)
        want = dimensionless_drag(u, eps, reynolds(phys))
        assert np.linalg.norm(got - want) <= 1e-12 * max(np.linalg.norm(want), 1e-300)
