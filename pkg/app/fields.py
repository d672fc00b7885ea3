from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly

from .fem import gauss_rule, p1disc_eval, physical_gradients, q2_eval
from .mesh import DofMaps, StructuredQuadMesh, locate_point


class CellQuadrature:
    # arrays are (cells, points, ...); cells are congruent, so basis tables and weights are shared

    def __init__(self, mesh: StructuredQuadMesh, n: int):
        self.mesh = mesh
        self.order = int(n)
        rule = gauss_rule(n)
        x0, y0 = mesh.cell_origins()
        self.x = x0[:, None] + (rule.xi[None, :] + 1.0) * (0.5 * mesh.hx)
        self.y = y0[:, None] + (rule.eta[None, :] + 1.0) * (0.5 * mesh.hy)
        self.weights = rule.weights * (0.25 * mesh.hx * mesh.hy)

        N, dN = q2_eval(rule.xi, rule.eta)
        self.N = N
        self.G = physical_gradients(dN, mesh.hx, mesh.hy)
        P, dP = p1disc_eval(rule.xi, rule.eta)
        self.P = P
        self.PG = physical_gradients(dP, mesh.hx, mesh.hy)

    @property
    def n_cells(self) -> int:
        return self.x.shape[0]

    def integrate(self, integrand: np.ndarray) -> float:
        # integrand sampled as (cells, points)
        return float(np.sum(integrand * self.weights[None, :]))

    def integrate_cells(self, integrand: np.ndarray) -> np.ndarray:
        return integrand @ self.weights


def _broadcast(value, shape) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), shape).copy()


@dataclass(frozen=True)
class ScalarField:
    value_fn: Callable
    gradient_fn: Optional[Callable] = None

    def value(self, x, y) -> np.ndarray:
        return _broadcast(self.value_fn(x, y), np.broadcast(np.asarray(x), np.asarray(y)).shape)

    def gradient(self, x, y) -> np.ndarray:
        if self.gradient_fn is None:
            raise ValueError("this scalar field has no gradient")
        return np.asarray(self.gradient_fn(x, y), dtype=float)

    def sample(self, quad: CellQuadrature):
        v = self.value(quad.x, quad.y)
        g = self.gradient(quad.x, quad.y) if self.gradient_fn is not None else None
        return v, g


@dataclass(frozen=True)
class ConstantScalar:
    c: float

    def value(self, x, y) -> np.ndarray:
        return np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(self.c))

    def gradient(self, x, y) -> np.ndarray:
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2,))

    def sample(self, quad: CellQuadrature):
        return self.value(quad.x, quad.y), self.gradient(quad.x, quad.y)


@dataclass(frozen=True)
class VectorField:
    # gradient[..., i, j] = d u_i / d x_j
    value_fn: Callable
    gradient_fn: Optional[Callable] = None

    def value(self, x, y) -> np.ndarray:
        return np.asarray(self.value_fn(x, y), dtype=float)

    def gradient(self, x, y) -> np.ndarray:
        if self.gradient_fn is None:
            raise ValueError("this vector field has no gradient")
        return np.asarray(self.gradient_fn(x, y), dtype=float)

    def __call__(self, x, y) -> np.ndarray:
        return self.value(x, y)

    def sample(self, quad: CellQuadrature):
        v = self.value(quad.x, quad.y)
        g = self.gradient(quad.x, quad.y) if self.gradient_fn is not None else None
        return v, g


def constant_vector(cx: float, cy: float) -> VectorField:
    def value(x, y):
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        out = np.empty(shape + (2,))
        out[..., 0], out[..., 1] = cx, cy
        return out

    def gradient(x, y):
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2, 2))

    return VectorField(value, gradient)


class PolynomialScalarField:
    # sum c[i, j] x^i y^j, via numpy.polynomial

    def __init__(self, coef):
        self.coef = np.atleast_2d(np.asarray(coef, dtype=float))
        self._dx = npoly.polyder(self.coef, axis=0)
        self._dy = npoly.polyder(self.coef, axis=1)

    def value(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return npoly.polyval2d(x, y, self.coef)

    def gradient(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        return np.stack([npoly.polyval2d(x, y, self._dx), npoly.polyval2d(x, y, self._dy)], axis=-1)

    def sample(self, quad: CellQuadrature):
        return self.value(quad.x, quad.y), self.gradient(quad.x, quad.y)


class PolynomialVectorField:
    def __init__(self, coef_x, coef_y):
        self.components = (PolynomialScalarField(coef_x), PolynomialScalarField(coef_y))

    def value(self, x, y) -> np.ndarray:
        return np.stack([c.value(x, y) for c in self.components], axis=-1)

    def gradient(self, x, y) -> np.ndarray:
        return np.stack([c.gradient(x, y) for c in self.components], axis=-2)

    def __call__(self, x, y) -> np.ndarray:
        return self.value(x, y)

    def sample(self, quad: CellQuadrature):
        return self.value(quad.x, quad.y), self.gradient(quad.x, quad.y)


class FEVelocity:
    def __init__(self, mesh: StructuredQuadMesh, maps: DofMaps, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (maps.n_velocity_dofs,):
            raise ValueError(f"expected {maps.n_velocity_dofs} velocity coefficients, got {coeffs.shape}")
        self.mesh = mesh
        self.maps = maps
        self.coeffs = coeffs

    def _cell_coeffs(self, cells) -> np.ndarray:
        return self.coeffs[self.maps.velocity_dofs[cells]].reshape(-1, 2, 9)

    def sample(self, quad: CellQuadrature):
        if quad.n_cells != self.mesh.cell_count:
            raise ValueError("quadrature does not belong to this mesh")
        U = self._cell_coeffs(slice(None))
        vals = np.einsum("cik,qk->cqi", U, quad.N)
        grads = np.einsum("cik,qkj->cqij", U, quad.G)
        return vals, grads

    def evaluate(self, x, y) -> np.ndarray:
        cells, xi, eta = locate_point(self.mesh, x, y)
        N, _ = q2_eval(xi, eta)
        return np.einsum("nik,nk->ni", self._cell_coeffs(cells), N)

    def evaluate_gradient(self, x, y) -> np.ndarray:
        cells, xi, eta = locate_point(self.mesh, x, y)
        _, dN = q2_eval(xi, eta)
        G = physical_gradients(dN, self.mesh.hx, self.mesh.hy)
        return np.einsum("nik,nkj->nij", self._cell_coeffs(cells), G)


class FEPressure:
    # cellwise linear discontinuous field, modes (1, xi, eta) per cell

    def __init__(self, mesh: StructuredQuadMesh, maps: DofMaps, coeffs: np.ndarray):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (maps.n_pressure_dofs,):
            raise ValueError(f"expected {maps.n_pressure_dofs} pressure coefficients, got {coeffs.shape}")
        self.mesh = mesh
        self.maps = maps
        self.coeffs = coeffs

    def sample(self, quad: CellQuadrature):
        Pc = self.coeffs[self.maps.pressure_dofs]
        return Pc @ quad.P.T, np.einsum("cm,qmj->cqj", Pc, quad.PG)

    def evaluate(self, x, y) -> np.ndarray:
        cells, xi, eta = locate_point(self.mesh, x, y)
        P, _ = p1disc_eval(xi, eta)
        return np.einsum("nm,nm->n", self.coeffs[self.maps.pressure_dofs[cells]], P)

    def mean(self) -> float:
        # modes xi and eta integrate to zero on each cell
        return float(np.mean(self.coeffs[self.maps.pressure_dofs[:, 0]]))


@dataclass(frozen=True)
class SolutionFields:
    mesh: StructuredQuadMesh
    maps: DofMaps
    velocity: np.ndarray
    pressure: np.ndarray

    @classmethod
    def zeros(cls, mesh: StructuredQuadMesh, maps: DofMaps) -> "SolutionFields":
        return cls(mesh, maps, np.zeros(maps.n_velocity_dofs), np.zeros(maps.n_pressure_dofs))

    @classmethod
    def from_vector(cls, mesh: StructuredQuadMesh, maps: DofMaps, x: np.ndarray) -> "SolutionFields":
        nv = maps.n_velocity_dofs
        return cls(mesh, maps, np.array(x[:nv], dtype=float), np.array(x[nv:], dtype=float))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.velocity, self.pressure])

    @property
    def velocity_field(self) -> FEVelocity:
        return FEVelocity(self.mesh, self.maps, self.velocity)

    @property
    def pressure_field(self) -> FEPressure:
        return FEPressure(self.mesh, self.maps, self.pressure)

    def nodal_velocity(self) -> np.ndarray:
        n = self.maps.n_nodes
        return np.column_stack([self.velocity[:n], self.velocity[n:]])

    def evaluate(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        return self.velocity_field.evaluate(x, y), self.pressure_field.evaluate(x, y)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.velocity)) and np.all(np.isfinite(self.pressure)))


def interpolate_velocity(maps: DofMaps, field) -> np.ndarray:
    v = np.asarray(field.value(maps.node_x, maps.node_y), dtype=float)
    return np.concatenate([v[:, 0], v[:, 1]])


def project_pressure(quad: CellQuadrature, maps: DofMaps, field) -> np.ndarray:
    # modes (1, xi, eta) are orthogonal on the reference cell, norms (4, 4/3, 4/3)
    vals = np.asarray(field.value(quad.x, quad.y), dtype=float)
    moments = np.einsum("cq,q,qm->cm", vals, quad.weights, quad.P)
    area = quad.mesh.hx * quad.mesh.hy
    coeffs = moments / (area * np.array([1.0, 1.0 / 3.0, 1.0 / 3.0]))
    out = np.zeros(maps.n_pressure_dofs)
    out[maps.pressure_dofs] = coeffs
    return out
