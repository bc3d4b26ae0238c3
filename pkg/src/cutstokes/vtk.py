"""Legacy ASCII VTK output of discrete fields on the sub-triangulation."""

from __future__ import annotations

import numpy as np

__all__ = ["write_fields_vtk", "read_vtk_fields"]


def _write_block(fh, name, values):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in values:
            fh.write(f"{v:.16e}\n")
    else:
        fh.write(f"VECTORS {name} double\n")
        for v in values:
            fh.write(f"{v[0]:.16e} {v[1]:.16e} 0\n")


def write_fields_vtk(path, disc, velocity, cell_fields=None, title="cut stokes fields") -> None:
    """Write every macro sub-triangle as its own cell.

    Points are the sub-triangle corners (duplicated per element) and carry the
    discrete velocity.  ``cell_fields`` maps names to per-active-element
    arrays, scalar ``(na,)`` or vector ``(na, 2)``; each value is repeated on
    the six sub-triangles of its element.  The element id and sub-triangle
    index are always written.
    """
    part = disc.partition
    na = len(part.elements)
    corners = part.sub_vertices().reshape(-1, 2)  # (na*6*3, 2)
    coef = velocity[disc.dofmap.velocity_local]
    nodal = np.einsum("nf,nkfc->nkc", coef, disc.basis.nodal)  # velocity at the 7 macro nodes
    u = nodal[:, part.sub_triangles].reshape(-1, 2)

    n_cells = 6 * na
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {len(corners)} double\n")
        for x, y in corners:
            fh.write(f"{x:.16e} {y:.16e} 0\n")
        fh.write(f"POLYGONS {n_cells} {4 * n_cells}\n")
        for c in range(n_cells):
            fh.write(f"3 {3 * c} {3 * c + 1} {3 * c + 2}\n")
        fh.write(f"CELL_DATA {n_cells}\n")
        _write_block(fh, "element", np.repeat(part.elements, 6))
        _write_block(fh, "sub_triangle", np.tile(np.arange(6), na))
        for name, values in (cell_fields or {}).items():
            _write_block(fh, name, np.repeat(np.asarray(values, dtype=float), 6, axis=0))
        fh.write(f"POINT_DATA {len(corners)}\n")
        _write_block(fh, "velocity", u)


def read_vtk_fields(path) -> dict:
    """Parse a file written by :func:`write_fields_vtk`.

    Returns a dict with ``points``, ``cells`` and one array per data block
    (vectors keep their two planar components).
    """
    with open(path) as fh:
        tokens = fh.read().split("\n")
    out = {}
    i = 4
    n_data = 0
    while i < len(tokens):
        line = tokens[i].split()
        i += 1
        if not line:
            continue
        key = line[0]
        if key == "POINTS":
            n = int(line[1])
            out["points"] = np.loadtxt(tokens[i : i + n], ndmin=2)[:, :2]
            i += n
        elif key == "POLYGONS":
            n = int(line[1])
            out["cells"] = np.loadtxt(tokens[i : i + n], dtype=np.int64, ndmin=2)[:, 1:]
            i += n
        elif key in ("CELL_DATA", "POINT_DATA"):
            n_data = int(line[1])
        elif key == "SCALARS":
            i += 1  # lookup table line
            out[line[1]] = np.loadtxt(tokens[i : i + n_data], ndmin=1)
            i += n_data
        elif key == "VECTORS":
            out[line[1]] = np.loadtxt(tokens[i : i + n_data], ndmin=2)[:, :2]
            i += n_data
    return out
