from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import CaseConfig, validate_config
from .errors import DomainError
from .fem import CellGeometry, map_to_reference

INLET = "inlet"
OUTLET = "outlet"
WALL = "wall"
INTERIOR = "interior"
BOUNDARY_TAGS = (INLET, OUTLET, WALL)

# local edge numbering of a cell: bottom, right, top, left
EDGE_BOTTOM, EDGE_RIGHT, EDGE_TOP, EDGE_LEFT = range(4)


@dataclass(frozen=True)
class BoundaryEdge:
    cell: int
    side: int
    tag: str


@dataclass(frozen=True)
class StructuredQuadMesh:
    # uniform cartesian mesh of (0, L) x (-R, R); cells x-fastest
    L: float
    R: float
    Nx: int
    Ny: int

    @property
    def hx(self) -> float:
        return self.L / self.Nx

    @property
    def hy(self) -> float:
        return 2.0 * self.R / self.Ny

    @property
    def cell_count(self) -> int:
        return self.Nx * self.Ny

    @property
    def vertex_count(self) -> int:
        return (self.Nx + 1) * (self.Ny + 1)

    def cell_index(self, cx: int, cy: int) -> int:
        return cy * self.Nx + cx

    def cell_origins(self) -> tuple[np.ndarray, np.ndarray]:
        c = np.arange(self.cell_count)
        return (c % self.Nx) * self.hx, -self.R + (c // self.Nx) * self.hy

    def cell(self, c: int) -> CellGeometry:
        if not (0 <= c < self.cell_count):
            raise IndexError(f"cell index {c} out of range")
        cx, cy = c % self.Nx, c // self.Nx
        return CellGeometry(x0=cx * self.hx, y0=-self.R + cy * self.hy, hx=self.hx, hy=self.hy)

    def cell_corners(self, c: int) -> np.ndarray:
        g = self.cell(c)
        return np.array(
            [(g.x0, g.y0), (g.x0 + g.hx, g.y0), (g.x0 + g.hx, g.y0 + g.hy), (g.x0, g.y0 + g.hy)]
        )

    def vertices(self) -> np.ndarray:
        xs = np.linspace(0.0, self.L, self.Nx + 1)
        ys = np.linspace(-self.R, self.R, self.Ny + 1)
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()])

    def boundary_edges(self) -> list[BoundaryEdge]:
        edges: list[BoundaryEdge] = []
        for cx in range(self.Nx):
            edges.append(BoundaryEdge(self.cell_index(cx, 0), EDGE_BOTTOM, WALL))
        for cy in range(self.Ny):
            edges.append(BoundaryEdge(self.cell_index(self.Nx - 1, cy), EDGE_RIGHT, OUTLET))
        for cx in range(self.Nx):
            edges.append(BoundaryEdge(self.cell_index(cx, self.Ny - 1), EDGE_TOP, WALL))
        for cy in range(self.Ny):
            edges.append(BoundaryEdge(self.cell_index(0, cy), EDGE_LEFT, INLET))
        return edges


def build_mesh(cfg: CaseConfig, validate: bool = True) -> StructuredQuadMesh:
    if validate:
        validate_config(cfg)
    return StructuredQuadMesh(L=float(cfg.L), R=float(cfg.R), Nx=int(cfg.Nx), Ny=int(cfg.Ny))


@dataclass(frozen=True)
class DofMaps:
    # velocity dof = node + component * n_nodes, pressure dof = 3 * cell + mode
    n_nodes: int
    node_x: np.ndarray
    node_y: np.ndarray
    cell_nodes: np.ndarray
    velocity_dofs: np.ndarray
    pressure_dofs: np.ndarray
    node_tags: np.ndarray
    boundary_nodes: dict[str, np.ndarray]

    @property
    def n_velocity_dofs(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_pressure_dofs(self) -> int:
        return int(self.pressure_dofs.size)

    @property
    def n_dofs(self) -> int:
        return self.n_velocity_dofs + self.n_pressure_dofs

    def node_coordinates(self) -> np.ndarray:
        return np.column_stack([self.node_x, self.node_y])


def _node_tags(mesh: StructuredQuadMesh, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    # grid indices of q2 nodes; corners go to the dirichlet side:
    # inlet wins at x = 0, wall wins at x = L
    ni, nj = 2 * mesh.Nx, 2 * mesh.Ny
    tags = np.full(i.shape, INTERIOR, dtype=object)
    tags[(j == 0) | (j == nj)] = WALL
    tags[i == ni] = np.where((j[i == ni] == 0) | (j[i == ni] == nj), WALL, OUTLET)
    tags[i == 0] = INLET
    return tags


def build_dof_maps(mesh: StructuredQuadMesh) -> DofMaps:
    nxn, nyn = 2 * mesh.Nx + 1, 2 * mesh.Ny + 1
    n_nodes = nxn * nyn
    ids = np.arange(n_nodes)
    i, j = ids % nxn, ids // nxn
    node_x = i * (0.5 * mesh.hx)
    node_y = -mesh.R + j * (0.5 * mesh.hy)
    # exact boundary coordinates
    node_x[i == nxn - 1] = mesh.L
    node_y[j == nyn - 1] = mesh.R

    c = np.arange(mesh.cell_count)
    cx, cy = c % mesh.Nx, c // mesh.Nx
    a = np.tile(np.arange(3), 3)
    b = np.repeat(np.arange(3), 3)
    cell_nodes = (2 * cy[:, None] + b[None, :]) * nxn + (2 * cx[:, None] + a[None, :])
    velocity_dofs = np.concatenate([cell_nodes, cell_nodes + n_nodes], axis=1)
    pressure_dofs = 3 * c[:, None] + np.arange(3)[None, :]

    tags = _node_tags(mesh, i, j)
    boundary = {t: np.flatnonzero(tags == t) for t in BOUNDARY_TAGS}
    for arr in (node_x, node_y, cell_nodes, velocity_dofs, pressure_dofs, tags, *boundary.values()):
        arr.setflags(write=False)

    return DofMaps(
        n_nodes=n_nodes,
        node_x=node_x,
        node_y=node_y,
        cell_nodes=cell_nodes,
        velocity_dofs=velocity_dofs,
        pressure_dofs=pressure_dofs,
        node_tags=tags,
        boundary_nodes=boundary,
    )


def classify_boundary_nodes(mesh: StructuredQuadMesh, maps: DofMaps) -> dict[str, np.ndarray]:
    nxn = 2 * mesh.Nx + 1
    ids = np.arange(maps.n_nodes)
    tags = _node_tags(mesh, ids % nxn, ids // nxn)
    return {t: np.flatnonzero(tags == t) for t in BOUNDARY_TAGS}


def locate_point(mesh: StructuredQuadMesh, x, y) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    # points on a shared edge belong to the lower-index cell
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    tol_x = 1e-12 * max(mesh.L, 1.0)
    tol_y = 1e-12 * max(mesh.R, 1.0)
    outside = (x < -tol_x) | (x > mesh.L + tol_x) | (np.abs(y) > mesh.R + tol_y) | ~np.isfinite(x) | ~np.isfinite(y)
    if np.any(outside):
        k = int(np.flatnonzero(outside)[0])
        raise DomainError(f"point ({x[k]}, {y[k]}) lies outside the channel")

    cx = np.clip(np.ceil(x / mesh.hx).astype(int) - 1, 0, mesh.Nx - 1)
    cy = np.clip(np.ceil((y + mesh.R) / mesh.hy).astype(int) - 1, 0, mesh.Ny - 1)
    cells = cy * mesh.Nx + cx
    x0 = cx * mesh.hx
    y0 = -mesh.R + cy * mesh.hy
    xi, eta = map_to_reference(CellGeometry(0.0, 0.0, mesh.hx, mesh.hy), x - x0, y - y0)
    return cells, np.clip(xi, -1.0, 1.0), np.clip(eta, -1.0, 1.0)


def dump_mesh(mesh: StructuredQuadMesh, maps: DofMaps, path: str | Path) -> Path:
    p = Path(path)
    with p.open("w", encoding="utf-8") as fh:
        fh.write(f"# q2 nodes of a {mesh.Nx}x{mesh.Ny} mesh on (0,{mesh.L!r})x(-{mesh.R!r},{mesh.R!r})\n")
        fh.write("# id x y tag\n")
        for k in range(maps.n_nodes):
            fh.write(f"{k} {maps.node_x[k]:.16e} {maps.node_y[k]:.16e} {maps.node_tags[k]}\n")
    return p
