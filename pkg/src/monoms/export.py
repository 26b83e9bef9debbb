"""Text exports of cell fields: legacy VTK structured grids and plain CSV."""
from __future__ import annotations

import csv

import numpy as np

from .errors import InvalidArgumentError
from .geometry import Grid


def _check_fields(grid: Grid, fields: dict) -> dict:
    out = {}
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.num_cells,):
            raise InvalidArgumentError(f"field {name!r} has shape {values.shape}, expected ({grid.num_cells},)")
        if " " in name:
            raise InvalidArgumentError(f"field names may not contain spaces: {name!r}")
        out[name] = values
    return out


def write_vtk(grid: Grid, fields: dict, path, title: str = "monoms field") -> None:
    """Legacy ASCII VTK ``STRUCTURED_GRID`` with one CELL_DATA scalar per field.

    Node and cell orderings (x fastest) already match the VTK convention.
    Two-dimensional grids are written as a single layer with z = 0.
    """
    fields = _check_fields(grid, fields)
    dims = list(grid.node_counts) + [1] * (3 - grid.dim)
    pts = np.zeros((grid.num_nodes, 3))
    pts[:, :grid.dim] = grid.node_coords
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET STRUCTURED_GRID\n")
        fh.write(f"DIMENSIONS {dims[0]} {dims[1]} {dims[2]}\n")
        fh.write(f"POINTS {grid.num_nodes} double\n")
        np.savetxt(fh, pts, fmt="%.17g")
        if fields:
            fh.write(f"CELL_DATA {grid.num_cells}\n")
        for name, values in fields.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, values, fmt="%.17g")


def read_vtk_cell_data(path) -> dict:
    """Cell scalars of a file written by :func:`write_vtk`."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    out, k, ncell = {}, 0, None
    while k < len(lines):
        parts = lines[k].split()
        if parts[:1] == ["CELL_DATA"]:
            ncell = int(parts[1])
        elif parts[:1] == ["SCALARS"] and ncell is not None:
            start = k + 2
            out[parts[1]] = np.array([float(v) for v in lines[start:start + ncell]])
            k = start + ncell
            continue
        k += 1
    return out


def write_field_csv(grid: Grid, fields: dict, path) -> None:
    """Rows ``cell, x, y[, z], <field>...`` at the cell centroids."""
    fields = _check_fields(grid, fields)
    axes = "xyz"[:grid.dim]
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["cell", *axes, *fields])
        cols = [grid.cell_centroids[:, a] for a in range(grid.dim)] + list(fields.values())
        for i in range(grid.num_cells):
            out.writerow([i] + [repr(float(c[i])) for c in cols])


def read_field_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


__all__ = ["write_vtk", "read_vtk_cell_data", "write_field_csv", "read_field_csv"]
