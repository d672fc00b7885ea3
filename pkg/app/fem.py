from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError

# q2 reference nodes, lexicographic with xi fastest: k = 3*b + a
Q2_NODES_1D = np.array([-1.0, 0.0, 1.0])
Q2_NODES = np.array([(Q2_NODES_1D[a], Q2_NODES_1D[b]) for b in range(3) for a in range(3)])
Q2_CENTER = 4

MAX_GAUSS_POINTS = 10


def _lagrange_1d(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # quadratic lagrange polynomials on {-1, 0, 1} and their derivatives, shape (..., 3)
    t = np.asarray(t, dtype=float)
    vals = np.stack([0.5 * t * (t - 1.0), 1.0 - t * t, 0.5 * t * (t + 1.0)], axis=-1)
    ders = np.stack([t - 0.5, -2.0 * t, t + 0.5], axis=-1)
    return vals, ders


def q2_eval(xi, eta) -> tuple[np.ndarray, np.ndarray]:
    # values (..., 9) and reference gradients (..., 9, 2) of the biquadratic basis
    lx, dlx = _lagrange_1d(xi)
    ly, dly = _lagrange_1d(eta)
    vals = (ly[..., :, None] * lx[..., None, :]).reshape(lx.shape[:-1] + (9,))
    gx = (ly[..., :, None] * dlx[..., None, :]).reshape(vals.shape)
    gy = (dly[..., :, None] * lx[..., None, :]).reshape(vals.shape)
    return vals, np.stack([gx, gy], axis=-1)


def p1disc_eval(xi, eta) -> tuple[np.ndarray, np.ndarray]:
    # modal cellwise-linear pressure basis (1, xi, eta) and its reference gradients
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    vals = np.stack([np.ones_like(xi), xi, eta], axis=-1)
    grads = np.zeros(vals.shape + (2,))
    grads[..., 1, 0] = 1.0
    grads[..., 2, 1] = 1.0
    return vals, grads


@dataclass(frozen=True)
class ReferenceBasis:
    kind: str

    @property
    def size(self) -> int:
        return 9 if self.kind == "q2" else 3

    def evaluate(self, xi, eta) -> tuple[np.ndarray, np.ndarray]:
        if self.kind == "q2":
            return q2_eval(xi, eta)
        if self.kind == "p1disc":
            return p1disc_eval(xi, eta)
        raise ValueError(f"unknown basis kind: {self.kind}")


Q2 = ReferenceBasis("q2")
P1DISC = ReferenceBasis("p1disc")


@dataclass(frozen=True)
class QuadratureRule:
    xi: np.ndarray
    eta: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return int(self.weights.size)


@dataclass(frozen=True)
class EdgeRule:
    points: np.ndarray
    weights: np.ndarray


def _check_order(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or not (1 <= n <= MAX_GAUSS_POINTS):
        raise DomainError(f"gauss points per direction must lie in 1..{MAX_GAUSS_POINTS}, got {n!r}")


@lru_cache(maxsize=None)
def gauss_rule_1d(n: int) -> EdgeRule:
    _check_order(n)
    pts, wts = np.polynomial.legendre.leggauss(int(n))
    pts.setflags(write=False)
    wts.setflags(write=False)
    return EdgeRule(points=pts, weights=wts)


@lru_cache(maxsize=None)
def gauss_rule(n: int) -> QuadratureRule:
    # tensor gauss rule on [-1, 1]^2, exact for degree <= 2n-1 per direction
    r = gauss_rule_1d(n)
    eta, xi = np.meshgrid(r.points, r.points, indexing="ij")
    w = np.outer(r.weights, r.weights)
    xi, eta, w = xi.ravel(), eta.ravel(), w.ravel()
    for a in (xi, eta, w):
        a.setflags(write=False)
    return QuadratureRule(xi=xi, eta=eta, weights=w)


@dataclass(frozen=True)
class CellGeometry:
    # axis-aligned rectangle [x0, x0+hx] x [y0, y0+hy]
    x0: float
    y0: float
    hx: float
    hy: float

    @property
    def area(self) -> float:
        return self.hx * self.hy


def map_to_physical(cell: CellGeometry, xi, eta) -> tuple[np.ndarray, np.ndarray]:
    x = cell.x0 + (np.asarray(xi, dtype=float) + 1.0) * 0.5 * cell.hx
    y = cell.y0 + (np.asarray(eta, dtype=float) + 1.0) * 0.5 * cell.hy
    return x, y


def map_to_reference(cell: CellGeometry, x, y) -> tuple[np.ndarray, np.ndarray]:
    xi = 2.0 * (np.asarray(x, dtype=float) - cell.x0) / cell.hx - 1.0
    eta = 2.0 * (np.asarray(y, dtype=float) - cell.y0) / cell.hy - 1.0
    return xi, eta


def jacobian(cell: CellGeometry) -> np.ndarray:
    return np.diag([0.5 * cell.hx, 0.5 * cell.hy])


def jacobian_det(cell: CellGeometry) -> float:
    return 0.25 * cell.hx * cell.hy


def physical_gradients(ref_grads: np.ndarray, hx: float, hy: float) -> np.ndarray:
    # inverse-transpose of diag(hx/2, hy/2)
    return ref_grads * np.array([2.0 / hx, 2.0 / hy])
