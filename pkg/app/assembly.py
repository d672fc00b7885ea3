from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Iterable, Optional

import numpy as np
from scipy import sparse

from .config import CaseConfig, porosity_field, validate_config
from .errors import SolverError
from .fem import gauss_rule_1d
from .fields import CellQuadrature, FEVelocity
from .mesh import (
    EDGE_BOTTOM,
    EDGE_LEFT,
    EDGE_RIGHT,
    EDGE_TOP,
    INLET,
    OUTLET,
    WALL,
    DofMaps,
    StructuredQuadMesh,
    build_dof_maps,
    build_mesh,
)
from .model import alpha_beta

# momentum terms: viscous a, darcy c, convective n, forchheimer d
ALL_TERMS = ("a", "c", "n", "d")
STOKES_DARCY_TERMS = ("a", "c")


def _sample(f, quad: CellQuadrature):
    return f.sample(quad)


def _eps_values(eps, quad: CellQuadrature) -> np.ndarray:
    return np.asarray(eps.value(quad.x, quad.y), dtype=float)


# ---------------------------------------------------------------------------
# direct form evaluation by quadrature (fields may be analytic or FE)


def eval_form_a(quad: CellQuadrature, u, v, eps, re: float) -> float:
    # (1/Re) (eps grad u, grad v)
    _, gu = _sample(u, quad)
    _, gv = _sample(v, quad)
    E = _eps_values(eps, quad)
    return quad.integrate(E * np.einsum("cqij,cqij->cq", gu, gv)) / re


def eval_form_b(quad: CellQuadrature, u, q, eps) -> float:
    # (div(eps u), q) expanded as eps div u + grad eps . u
    uv, gu = _sample(u, quad)
    qv, _ = _sample(q, quad)
    E, gE = _sample(eps, quad)
    div_eps_u = E * (gu[..., 0, 0] + gu[..., 1, 1]) + np.einsum("cqi,cqi->cq", gE, uv)
    return quad.integrate(div_eps_u * qv)


def eval_form_c(quad: CellQuadrature, u, v, eps, re: float) -> float:
    # (1/Re) (alpha u, v)
    uv, _ = _sample(u, quad)
    vv, _ = _sample(v, quad)
    alpha, _ = alpha_beta(_eps_values(eps, quad))
    return quad.integrate(alpha * np.einsum("cqi,cqi->cq", uv, vv)) / re


def eval_form_d(quad: CellQuadrature, w, u, v, eps) -> float:
    # (beta |w| u, v)
    wv, _ = _sample(w, quad)
    uv, _ = _sample(u, quad)
    vv, _ = _sample(v, quad)
    _, beta = alpha_beta(_eps_values(eps, quad))
    speed = np.linalg.norm(wv, axis=-1)
    return quad.integrate(beta * speed * np.einsum("cqi,cqi->cq", uv, vv))


def eval_form_n(quad: CellQuadrature, w, u, v, eps) -> float:
    # ((eps w . grad) u, v) = sum_ij (eps w_j d_j u_i, v_i), no skew-symmetrization
    wv, _ = _sample(w, quad)
    _, gu = _sample(u, quad)
    vv, _ = _sample(v, quad)
    E = _eps_values(eps, quad)
    return quad.integrate(E * np.einsum("cqj,cqij,cqi->cq", wv, gu, vv))


# ---------------------------------------------------------------------------
# matrix assembly


def _scatter_vector_block(local: np.ndarray, maps: DofMaps) -> sparse.csr_matrix:
    # the same 9x9 scalar block acts on both velocity components
    nv = maps.n_nodes
    nodes = maps.cell_nodes
    rows = np.concatenate([np.broadcast_to(nodes[:, :, None] + k * nv, local.shape) for k in (0, 1)], axis=None)
    cols = np.concatenate([np.broadcast_to(nodes[:, None, :] + k * nv, local.shape) for k in (0, 1)], axis=None)
    data = np.concatenate([local.ravel(), local.ravel()])
    n = maps.n_velocity_dofs
    # coo sums duplicates in a fixed order
    return sparse.coo_matrix((data, (rows, cols)), shape=(n, n)).tocsr()


def local_viscous(quad: CellQuadrature, E: np.ndarray, re: float) -> np.ndarray:
    return np.einsum("cq,q,qid,qjd->cij", E, quad.weights, quad.G, quad.G, optimize=True) / re


def local_mass(quad: CellQuadrature, weight: np.ndarray) -> np.ndarray:
    return np.einsum("cq,q,qi,qj->cij", weight, quad.weights, quad.N, quad.N, optimize=True)


def local_convection(quad: CellQuadrature, E: np.ndarray, W: np.ndarray) -> np.ndarray:
    # [test i, trial j] = sum_q eps (w . grad phi_j) phi_i
    return np.einsum("cq,q,cqd,qjd,qi->cij", E, quad.weights, W, quad.G, quad.N, optimize=True)


def local_divergence(quad: CellQuadrature, E: np.ndarray, gE: np.ndarray) -> np.ndarray:
    # [cell, pressure mode m, component-major velocity dof]
    blocks = []
    for d in (0, 1):
        blk = np.einsum("cq,q,qk,qm->cmk", E, quad.weights, quad.G[:, :, d], quad.P, optimize=True)
        blk = blk + np.einsum("cq,q,qk,qm->cmk", gE[..., d], quad.weights, quad.N, quad.P, optimize=True)
        blocks.append(blk)
    return np.concatenate(blocks, axis=2)


def assemble_divergence(quad: CellQuadrature, maps: DofMaps, E: np.ndarray, gE: np.ndarray) -> sparse.csr_matrix:
    local = local_divergence(quad, E, gE)
    rows = np.broadcast_to(maps.pressure_dofs[:, :, None], local.shape)
    cols = np.broadcast_to(maps.velocity_dofs[:, None, :], local.shape)
    shape = (maps.n_pressure_dofs, maps.n_velocity_dofs)
    return sparse.coo_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=shape).tocsr()


def assemble_load(quad: CellQuadrature, maps: DofMaps, forcing: Callable) -> np.ndarray:
    f = np.asarray(forcing(quad.x, quad.y), dtype=float)
    local = np.einsum("cqd,q,qi->cdi", f, quad.weights, quad.N, optimize=True)
    return np.bincount(
        maps.velocity_dofs.ravel(), weights=local.reshape(local.shape[0], -1).ravel(), minlength=maps.n_velocity_dofs
    )


def assemble_h1_gram(quad: CellQuadrature, maps: DofMaps) -> tuple[sparse.csr_matrix, sparse.csr_matrix]:
    ones = np.ones_like(quad.x)
    return (
        _scatter_vector_block(local_mass(quad, ones), maps),
        _scatter_vector_block(local_viscous(quad, ones, 1.0), maps),
    )


# ---------------------------------------------------------------------------
# boundary data


def trapezoid_profile(y, u_in: float, R: float, ramp: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return u_in * np.clip((R - np.abs(y)) / ramp, 0.0, 1.0)


def parabolic_profile(y, u_in: float, R: float) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return u_in * (1.0 - (y / R) ** 2)


@dataclass(frozen=True)
class DirichletData:
    # velocity data per boundary tag; outlet is None under the outflow condition
    inlet: Callable
    wall: Callable
    outlet: Optional[Callable] = None
    pin_pressure: bool = False

    @property
    def tags(self) -> tuple[str, ...]:
        return (INLET, WALL) if self.outlet is None else (INLET, WALL, OUTLET)

    def evaluate(self, tag: str, x, y) -> np.ndarray:
        fn = {INLET: self.inlet, WALL: self.wall, OUTLET: self.outlet}[tag]
        if fn is None:
            raise ValueError(f"no dirichlet data on the {tag} boundary")
        out = np.asarray(fn(np.asarray(x, dtype=float), np.asarray(y, dtype=float)), dtype=float)
        return out.reshape(-1, 2)

    def velocity_on_boundary(self, tag: str, x, y) -> Optional[np.ndarray]:
        # None on a natural-outflow outlet, which carries no data
        if tag not in self.tags:
            return None
        return self.evaluate(tag, x, y)


@dataclass(frozen=True)
class _InletProfile:
    kind: str
    u_in: float
    R: float
    ramp: float

    def __call__(self, x, y) -> np.ndarray:
        if self.kind == "parabolic":
            ux = parabolic_profile(y, self.u_in, self.R)
        else:
            ux = trapezoid_profile(y, self.u_in, self.R, self.ramp)
        ux = np.broadcast_to(ux, np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return np.stack([ux, np.zeros_like(ux)], axis=-1)


@dataclass(frozen=True)
class _WallInjection:
    # (0, u_w) at y = -R and (0, -u_w) at y = +R
    u_w: float

    def __call__(self, x, y) -> np.ndarray:
        y = np.broadcast_to(np.asarray(y, dtype=float), np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return np.stack([np.zeros_like(y), -self.u_w * np.sign(y)], axis=-1)


@dataclass(frozen=True)
class _Zero:
    def __call__(self, x, y) -> np.ndarray:
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape + (2,))


def dirichlet_data(cfg: CaseConfig) -> DirichletData:
    if cfg.boundary_velocity is not None:
        g = cfg.boundary_velocity
        return DirichletData(inlet=g, wall=g, outlet=None if cfg.outflow else g, pin_pressure=not cfg.outflow)
    inlet = _InletProfile(cfg.inlet_profile, cfg.u_in, cfg.R, cfg.ramp)
    return DirichletData(
        inlet=inlet,
        wall=_WallInjection(cfg.u_w),
        outlet=None if cfg.outflow else _Zero(),
        pin_pressure=not cfg.outflow,
    )


@dataclass(frozen=True)
class FluxReport:
    # signed outward eps-weighted fluxes per boundary segment
    segments: dict[str, float]

    @property
    def net(self) -> float:
        return float(sum(self.segments.values()))

    @property
    def inflow(self) -> float:
        return self.segments.get(INLET, math.nan)

    @property
    def outflow(self) -> float:
        return self.segments.get(OUTLET, math.nan)

    @property
    def wall(self) -> float:
        return self.segments.get(WALL, math.nan)


def boundary_flux(mesh: StructuredQuadMesh, velocity: Callable, porosity, n: int = 5) -> FluxReport:
    # integral of eps u . n per boundary segment; velocity(tag, x, y) -> (k, 2),
    # or None for a segment without data, which is then left out
    rule = gauss_rule_1d(n)
    t, w = rule.points, rule.weights
    xs = (np.arange(mesh.Nx)[:, None] + 0.5 * (t[None, :] + 1.0)) * mesh.hx
    ys = -mesh.R + (np.arange(mesh.Ny)[:, None] + 0.5 * (t[None, :] + 1.0)) * mesh.hy
    wx = np.broadcast_to(w * 0.5 * mesh.hx, xs.shape).ravel()
    wy = np.broadcast_to(w * 0.5 * mesh.hy, ys.shape).ravel()
    xs, ys = xs.ravel(), ys.ravel()

    sides = {
        EDGE_BOTTOM: (WALL, xs, np.full_like(xs, -mesh.R), wx, (0.0, -1.0)),
        EDGE_RIGHT: (OUTLET, np.full_like(ys, mesh.L), ys, wy, (1.0, 0.0)),
        EDGE_TOP: (WALL, xs, np.full_like(xs, mesh.R), wx, (0.0, 1.0)),
        EDGE_LEFT: (INLET, np.full_like(ys, 0.0), ys, wy, (-1.0, 0.0)),
    }
    segments: dict[str, float] = {}
    for tag, x, y, wts, normal in sides.values():
        raw = velocity(tag, x, y)
        if raw is None:
            continue
        u = np.asarray(raw, dtype=float).reshape(-1, 2)
        eps = np.asarray(porosity.value(x, y), dtype=float)
        un = u[:, 0] * normal[0] + u[:, 1] * normal[1]
        segments[tag] = segments.get(tag, 0.0) + float(np.sum(wts * eps * un))
    return FluxReport(segments={t: segments[t] for t in (INLET, OUTLET, WALL) if t in segments})


# ---------------------------------------------------------------------------
# discretization and saddle-point system


class Discretization:
    # mesh, dof maps, quadrature and the w-independent parts of the operator

    def __init__(self, cfg: CaseConfig):
        self.cfg = validate_config(cfg)
        self.mesh = build_mesh(cfg, validate=False)
        self.maps = build_dof_maps(self.mesh)
        self.quad = CellQuadrature(self.mesh, cfg.quad_order)
        self.porosity = porosity_field(cfg)
        self.dirichlet = dirichlet_data(cfg)

    @cached_property
    def eps(self) -> tuple[np.ndarray, np.ndarray]:
        E, gE = self.porosity.sample(self.quad)
        if gE is None:
            raise ValueError("porosity field must provide a gradient")
        return np.asarray(E, dtype=float), np.asarray(gE, dtype=float)

    @cached_property
    def coefficients(self) -> tuple[np.ndarray, np.ndarray]:
        return alpha_beta(self.eps[0])

    @cached_property
    def viscous(self) -> sparse.csr_matrix:
        return _scatter_vector_block(local_viscous(self.quad, self.eps[0], self.cfg.Re), self.maps)

    @cached_property
    def darcy(self) -> sparse.csr_matrix:
        return _scatter_vector_block(local_mass(self.quad, self.coefficients[0] / self.cfg.Re), self.maps)

    @cached_property
    def divergence(self) -> sparse.csr_matrix:
        return assemble_divergence(self.quad, self.maps, *self.eps)

    @cached_property
    def load(self) -> np.ndarray:
        return assemble_load(self.quad, self.maps, self.cfg.forcing)

    def convection(self, w: np.ndarray) -> sparse.csr_matrix:
        W, _ = FEVelocity(self.mesh, self.maps, w).sample(self.quad)
        return _scatter_vector_block(local_convection(self.quad, self.eps[0], W), self.maps)

    def forchheimer(self, w: np.ndarray) -> sparse.csr_matrix:
        W, _ = FEVelocity(self.mesh, self.maps, w).sample(self.quad)
        weight = self.coefficients[1] * np.linalg.norm(W, axis=-1)
        return _scatter_vector_block(local_mass(self.quad, weight), self.maps)


@dataclass
class SaddleSystem:
    # [[A(w), -B^T], [B, 0]]; operator and rhs are set once dirichlet rows are applied
    blocks: dict[str, sparse.csr_matrix]
    b: sparse.csr_matrix
    load: np.ndarray
    constraint_rhs: np.ndarray
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    dirichlet_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    gauge_dof: Optional[int] = None
    operator: Optional[sparse.csr_matrix] = None
    rhs: Optional[np.ndarray] = None

    @property
    def n_velocity(self) -> int:
        return self.b.shape[1]

    @property
    def a_block(self) -> sparse.csr_matrix:
        out = None
        for m in self.blocks.values():
            out = m if out is None else out + m
        return out.tocsr()

    def unconstrained_operator(self) -> sparse.csr_matrix:
        return sparse.bmat([[self.a_block, -self.b.T], [self.b, None]], format="csr")

    def unconstrained_rhs(self) -> np.ndarray:
        return np.concatenate([self.load, self.constraint_rhs])

    @property
    def constrained(self) -> bool:
        return self.operator is not None


def assemble_system(
    disc: Discretization,
    w: Optional[np.ndarray] = None,
    terms: Iterable[str] = ALL_TERMS,
    constrain: bool = True,
) -> SaddleSystem:
    terms = tuple(terms)
    unknown = set(terms) - set(ALL_TERMS)
    if unknown:
        raise ValueError(f"unknown terms: {sorted(unknown)}")
    maps = disc.maps
    if w is None:
        w = np.zeros(maps.n_velocity_dofs)
    if w.shape != (maps.n_velocity_dofs,):
        raise SolverError(f"iterate has {w.shape} entries, expected {maps.n_velocity_dofs}")

    blocks: dict[str, sparse.csr_matrix] = {}
    if "a" in terms:
        blocks["a"] = disc.viscous
    if "c" in terms:
        blocks["c"] = disc.darcy
    if "n" in terms:
        blocks["n"] = disc.convection(w)
    if "d" in terms:
        blocks["d"] = disc.forchheimer(w)
    if not blocks:
        raise ValueError("at least one momentum term is required")

    system = SaddleSystem(
        blocks=blocks,
        b=disc.divergence,
        load=disc.load.copy(),
        constraint_rhs=np.zeros(maps.n_pressure_dofs),
    )
    if constrain:
        system = apply_dirichlet(system, disc.dirichlet, maps)
    return system


def dirichlet_constraints(data: DirichletData, maps: DofMaps) -> tuple[np.ndarray, np.ndarray]:
    dofs: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    for tag in data.tags:
        nodes = maps.boundary_nodes[tag]
        g = data.evaluate(tag, maps.node_x[nodes], maps.node_y[nodes])
        dofs += [nodes, nodes + maps.n_nodes]
        vals += [g[:, 0], g[:, 1]]
    dofs_arr = np.concatenate(dofs).astype(int)
    vals_arr = np.concatenate(vals)

    order = np.argsort(dofs_arr, kind="stable")
    dofs_arr, vals_arr = dofs_arr[order], vals_arr[order]
    dup = np.flatnonzero(np.diff(dofs_arr) == 0)
    if dup.size and np.any(vals_arr[dup] != vals_arr[dup + 1]):
        raise SolverError(f"conflicting dirichlet prescriptions at velocity dof {int(dofs_arr[dup[0]])}")
    keep = np.ones(dofs_arr.size, dtype=bool)
    keep[dup + 1] = False
    return dofs_arr[keep], vals_arr[keep]


def apply_dirichlet(system: SaddleSystem, data: DirichletData, maps: DofMaps) -> SaddleSystem:
    dofs, values = dirichlet_constraints(data, maps)
    gauge = maps.n_velocity_dofs if data.pin_pressure else None

    M = system.unconstrained_operator()
    n = M.shape[0]
    fixed = dofs if gauge is None else np.append(dofs, gauge)
    fixed_values = values if gauge is None else np.append(values, 0.0)

    lift = np.zeros(n)
    lift[fixed] = fixed_values
    rhs = system.unconstrained_rhs() - M @ lift

    free = np.ones(n)
    free[fixed] = 0.0
    Dfree = sparse.diags(free)
    operator = (Dfree @ M @ Dfree + sparse.diags(1.0 - free)).tocsr()
    operator.eliminate_zeros()
    rhs[fixed] = fixed_values

    system.dirichlet_dofs = dofs
    system.dirichlet_values = values
    system.gauge_dof = gauge
    system.operator = operator
    system.rhs = rhs
    return system


def dump_matrix(matrix, path: str | Path) -> Path:
    p = Path(path)
    coo = sparse.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with p.open("w", encoding="utf-8") as fh:
        fh.write(f"# {coo.shape[0]} x {coo.shape[1]}, {coo.nnz} entries\n")
        fh.write("# row col value\n")
        for k in order:
            fh.write(f"{coo.row[k]} {coo.col[k]} {coo.data[k]:.17e}\n")
    return p
