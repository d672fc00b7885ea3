import numpy as np
import pytest

from app.fields import (
    CellQuadrature,
    ConstantScalar,
    FEPressure,
    FEVelocity,
    PolynomialScalarField,
    PolynomialVectorField,
    ScalarField,
    SolutionFields,
    VectorField,
    constant_vector,
    interpolate_velocity,
    project_pressure,
)
from app.mesh import StructuredQuadMesh, build_dof_maps


@pytest.fixture
def mesh():
    return StructuredQuadMesh(L=2.0, R=0.5, Nx=4, Ny=3)


@pytest.fixture
def maps(mesh):
    return build_dof_maps(mesh)


@pytest.fixture
def quad(mesh):
    return CellQuadrature(mesh, 4)


def _biquadratic():
    # u = (x^2 y + 1, x y^2 - y), components in Q2 on every cell
    cx = np.zeros((3, 3))
    cx[0, 0], cx[2, 1] = 1.0, 1.0
    cy = np.zeros((3, 3))
    cy[1, 2], cy[0, 1] = 1.0, -1.0
    return PolynomialVectorField(cx, cy)


def test_quadrature_integrates_polynomials(mesh, quad):
    assert quad.n_cells == mesh.cell_count
    assert quad.integrate(np.ones_like(quad.x)) == pytest.approx(2.0, rel=1e-14)
    # int x^3 y^2 over (0,2)x(-1/2,1/2) = 4 * (1/12)
    assert quad.integrate(quad.x**3 * quad.y**2) == pytest.approx(4.0 / 12.0, rel=1e-13)
    per_cell = quad.integrate_cells(np.ones_like(quad.x))
    np.testing.assert_allclose(per_cell, mesh.hx * mesh.hy)


def test_polynomial_field_gradient():
    f = PolynomialScalarField([[0.0, 1.0], [2.0, 3.0]])  # y + 2x + 3xy
    np.testing.assert_allclose(f.value(1.0, 2.0), 2.0 + 2.0 + 6.0)
    np.testing.assert_allclose(f.gradient(1.0, 2.0), [2.0 + 6.0, 1.0 + 3.0])


def test_vector_field_gradient_layout():
    u = _biquadratic()
    g = u.gradient(np.array([1.0]), np.array([2.0]))
    # g[i, j] = d u_i / d x_j
    np.testing.assert_allclose(g[0], [[2 * 1.0 * 2.0, 1.0], [2.0**2, 2 * 1.0 * 2.0 - 1.0]])


def test_constant_fields(quad):
    v, g = constant_vector(1.5, -2.0).sample(quad)
    assert v.shape == quad.x.shape + (2,)
    np.testing.assert_array_equal(v[..., 1], -2.0)
    np.testing.assert_array_equal(g, 0.0)
    s, gs = ConstantScalar(0.7).sample(quad)
    np.testing.assert_array_equal(s, 0.7)
    assert gs.shape == quad.x.shape + (2,)


def test_scalar_field_without_gradient(quad):
    f = ScalarField(lambda x, y: x + y)
    v, g = f.sample(quad)
    assert g is None
    np.testing.assert_allclose(v, quad.x + quad.y)
    with pytest.raises(ValueError):
        f.gradient(0.0, 0.0)


def test_fe_velocity_reproduces_q2_fields(mesh, maps, quad):
    exact = _biquadratic()
    fe = FEVelocity(mesh, maps, interpolate_velocity(maps, exact))
    vals, grads = fe.sample(quad)
    ev, eg = exact.sample(quad)
    np.testing.assert_allclose(vals, ev, atol=1e-13)
    np.testing.assert_allclose(grads, eg, atol=1e-12)

    x = np.array([0.1, 1.0, 1.999, 0.5])
    y = np.array([-0.5, 0.0, 0.3, 0.5])
    np.testing.assert_allclose(fe.evaluate(x, y), exact.value(x, y), atol=1e-13)
    np.testing.assert_allclose(fe.evaluate_gradient(x, y), exact.gradient(x, y), atol=1e-12)


def test_fe_velocity_checks_length(mesh, maps):
    with pytest.raises(ValueError):
        FEVelocity(mesh, maps, np.zeros(3))


def test_interpolation_is_exact_at_nodes(maps):
    f = VectorField(lambda x, y: np.stack([np.sin(x), np.cos(y)], axis=-1))
    c = interpolate_velocity(maps, f)
    np.testing.assert_array_equal(c[: maps.n_nodes], np.sin(maps.node_x))
    np.testing.assert_array_equal(c[maps.n_nodes :], np.cos(maps.node_y))


def test_pressure_projection_of_linear_field(mesh, maps, quad):
    p = PolynomialScalarField([[1.0, -2.0], [0.5, 0.0]])  # 1 - 2y + x/2
    coeffs = project_pressure(quad, maps, p)
    fe = FEPressure(mesh, maps, coeffs)
    vals, grads = fe.sample(quad)
    np.testing.assert_allclose(vals, p.value(quad.x, quad.y), atol=1e-13)
    np.testing.assert_allclose(grads[..., 0], 0.5, atol=1e-12)
    np.testing.assert_allclose(grads[..., 1], -2.0, atol=1e-12)
    # domain mean of 1 - 2y + x/2 on (0,2)x(-1/2,1/2)
    assert fe.mean() == pytest.approx(1.5, rel=1e-13)
    np.testing.assert_allclose(fe.evaluate([1.3], [0.2]), [1.0 - 0.4 + 0.65], atol=1e-13)


def test_solution_fields_vector_layout(mesh, maps):
    x = np.arange(maps.n_dofs, dtype=float)
    s = SolutionFields.from_vector(mesh, maps, x)
    np.testing.assert_array_equal(s.as_vector(), x)
    nodal = s.nodal_velocity()
    assert nodal.shape == (maps.n_nodes, 2)
    assert nodal[3, 1] == maps.n_nodes + 3
    assert s.is_finite()

    z = SolutionFields.zeros(mesh, maps)
    assert not np.any(z.as_vector())
    bad = SolutionFields(mesh, maps, np.full(maps.n_velocity_dofs, np.nan), z.pressure)
    assert not bad.is_finite()
