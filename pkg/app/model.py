from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# ergun constants for beds of spherical pellets
ERGUN_LINEAR = 150.0
ERGUN_QUADRATIC = 1.75


def _check_porosity(eps) -> np.ndarray:
    e = np.asarray(eps, dtype=float)
    if np.any(~np.isfinite(e)) or np.any(e <= 0.0) or np.any(e > 1.0):
        raise DomainError(f"porosity must lie in (0, 1], got {eps!r}")
    return e


def _scalar_or_array(value: np.ndarray, like):
    return float(value) if np.ndim(like) == 0 else value


def kappa(eps):
    # scalars and arrays
    e = _check_porosity(eps)
    return _scalar_or_array((1.0 - e) / e, eps)


def alpha_beta(eps):
    # (alpha, beta) = (150 kappa^2, 1.75 kappa)
    k = np.asarray(kappa(eps), dtype=float)
    alpha = ERGUN_LINEAR * k * k
    beta = ERGUN_QUADRATIC * k
    return _scalar_or_array(alpha, eps), _scalar_or_array(beta, eps)


@dataclass(frozen=True)
class PhysicalParams:
    U0: float
    d_p: float
    nu: float
    rho: float = 1.0

    def __post_init__(self) -> None:
        for name in ("U0", "d_p", "nu", "rho"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0.0:
                raise DomainError(f"{name} must be > 0, got {v!r}")


def reynolds(phys: PhysicalParams) -> float:
    return phys.U0 * phys.d_p / phys.nu


def _norm(u: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(u * u, axis=-1, keepdims=True))


def ergun_sigma(u, eps, phys: PhysicalParams) -> np.ndarray:
    # dimensional packing friction per unit mass, u in m/s
    e = _check_porosity(eps)
    if phys.d_p <= 0.0:
        raise DomainError("d_p must be > 0")
    u = np.asarray(u, dtype=float)
    e = e[..., None] if e.ndim else e
    lin = ERGUN_LINEAR * phys.nu * (1.0 - e) ** 2 / (e * e * phys.d_p * phys.d_p)
    quad = ERGUN_QUADRATIC * (1.0 - e) / (e * phys.d_p)
    return lin * u + quad * u * _norm(u)


def dimensionless_drag(u, eps, re: float) -> np.ndarray:
    # (alpha / Re) u + beta u |u| in the scaled variables
    if re <= 0.0:
        raise DomainError(f"Re must be > 0, got {re!r}")
    alpha, beta = alpha_beta(eps)
    u = np.asarray(u, dtype=float)
    alpha = np.asarray(alpha)[..., None] if np.ndim(alpha) else alpha
    beta = np.asarray(beta)[..., None] if np.ndim(beta) else beta
    return (alpha / re) * u + beta * u * _norm(u)


def nondimensional_sigma(u_star, eps, phys: PhysicalParams) -> np.ndarray:
    # sigma(U0 u*) rescaled by d_p / U0^2, the momentum scale of the dimensionless system
    u = np.asarray(u_star, dtype=float) * phys.U0
    return ergun_sigma(u, eps, phys) * (phys.d_p / (phys.U0 * phys.U0))


@dataclass(frozen=True)
class PorosityModel:
    # eps(y) = eps_inf * (1 + (1 - eps_inf) / eps_inf * exp(-decay * (R - |y|))), exactly 1 on the walls
    eps_inf: float
    decay: float
    R: float

    def __post_init__(self) -> None:
        if not (0.0 < self.eps_inf <= 1.0):
            raise DomainError(f"eps_inf must lie in (0, 1], got {self.eps_inf!r}")
        if self.R <= 0.0:
            raise DomainError(f"R must be > 0, got {self.R!r}")
        if self.decay <= 0.0:
            raise DomainError(f"decay must be > 0, got {self.decay!r}")

    def _distance_to_wall(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        tol = 1e-12 * self.R
        if np.any(np.abs(y) > self.R + tol):
            raise DomainError(f"|y| must not exceed R={self.R}")
        return np.maximum(self.R - np.abs(y), 0.0)

    def value(self, x, y):
        d = self._distance_to_wall(y)
        eps = self.eps_inf + (1.0 - self.eps_inf) * np.exp(-self.decay * d)
        # wall value exactly 1, never above 1 after rounding
        eps = np.where(d == 0.0, 1.0, np.minimum(eps, 1.0))
        out = np.broadcast_to(eps, np.broadcast(np.asarray(x), d).shape).copy()
        return float(out) if out.ndim == 0 else out

    def gradient(self, x, y) -> np.ndarray:
        y_arr = np.asarray(y, dtype=float)
        d = self._distance_to_wall(y_arr)
        dy = (1.0 - self.eps_inf) * self.decay * np.sign(y_arr) * np.exp(-self.decay * d)
        shape = np.broadcast(np.asarray(x), y_arr).shape
        g = np.zeros(shape + (2,))
        g[..., 1] = dy
        return g

    def sample(self, quad):
        return self.value(quad.x, quad.y), self.gradient(quad.x, quad.y)


def porosity_at(y, model: PorosityModel):
    return model.value(0.0, y)


def porosity_gradient(y, model: PorosityModel):
    g = model.gradient(0.0, y)[..., 1]
    return float(g) if np.ndim(y) == 0 else g
