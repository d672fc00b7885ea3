from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from vtkmodules.vtkCommonCore import vtkDoubleArray, vtkPoints
from vtkmodules.vtkCommonDataModel import vtkBiQuadraticQuad, vtkUnstructuredGrid

from .fields import SolutionFields

# note: vtk xml io classes are optional depending on vtk build; imports are inside functions

# local q2 node k = 3 * b + a -> vtk biquadratic quad order:
# corners ccw, then bottom/right/top/left mid-edges, then the center
VTK_BIQUADRATIC_ORDER = (0, 2, 8, 6, 1, 5, 7, 3, 4)


def _point_array(name: str, values: np.ndarray) -> vtkDoubleArray:
    values = np.asarray(values, dtype=float)
    ncomp = 1 if values.ndim == 1 else values.shape[1]
    arr = vtkDoubleArray()
    arr.SetName(name)
    arr.SetNumberOfComponents(ncomp)
    arr.SetNumberOfTuples(values.shape[0])
    flat = values.reshape(values.shape[0], ncomp)
    for i, row in enumerate(flat):
        arr.SetTuple(i, [float(v) for v in row])
    return arr


def fields_to_grid(fields: SolutionFields, porosity) -> vtkUnstructuredGrid:
    maps = fields.maps
    points = vtkPoints()
    for x, y in zip(maps.node_x, maps.node_y):
        points.InsertNextPoint(float(x), float(y), 0.0)

    grid = vtkUnstructuredGrid()
    grid.SetPoints(points)
    grid.Allocate(fields.mesh.cell_count)
    for nodes in maps.cell_nodes:
        cell = vtkBiQuadraticQuad()
        for i, k in enumerate(VTK_BIQUADRATIC_ORDER):
            cell.GetPointIds().SetId(i, int(nodes[k]))
        grid.InsertNextCell(cell.GetCellType(), cell.GetPointIds())

    uv = fields.nodal_velocity()
    velocity = np.column_stack([uv, np.zeros(maps.n_nodes)])
    pressure = fields.pressure_field.evaluate(maps.node_x, maps.node_y)
    eps = np.asarray(porosity.value(maps.node_x, maps.node_y), dtype=float)

    pd = grid.GetPointData()
    pd.AddArray(_point_array("velocity", velocity))
    pd.AddArray(_point_array("pressure", pressure))
    pd.AddArray(_point_array("porosity", eps))
    pd.SetActiveVectors("velocity")
    return grid


def write_vtu(path: Union[str, Path], fields: SolutionFields, porosity) -> Path:
    from vtkmodules.vtkIOXML import vtkXMLUnstructuredGridWriter

    p = Path(path)
    writer = vtkXMLUnstructuredGridWriter()
    writer.SetFileName(str(p))
    writer.SetInputData(fields_to_grid(fields, porosity))
    writer.SetDataModeToAscii()
    if writer.Write() != 1:
        raise RuntimeError(f"vtk writer failed for {p}")
    return p


@dataclass(frozen=True)
class VtuSummary:
    points: int
    cells: int
    cell_types: set[int]
    arrays: list[str]


def read_vtu(path: Union[str, Path]) -> VtuSummary:
    from vtkmodules.vtkIOXML import vtkXMLUnstructuredGridReader

    reader = vtkXMLUnstructuredGridReader()
    reader.SetFileName(str(path))
    reader.Update()
    grid = reader.GetOutput()
    if grid is None:
        raise RuntimeError("reader returned no grid")
    pd = grid.GetPointData()
    return VtuSummary(
        points=grid.GetNumberOfPoints(),
        cells=grid.GetNumberOfCells(),
        cell_types={grid.GetCellType(i) for i in range(grid.GetNumberOfCells())},
        arrays=[pd.GetArrayName(i) for i in range(pd.GetNumberOfArrays())],
    )
