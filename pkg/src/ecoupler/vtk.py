"""Legacy ASCII VTK export (UNSTRUCTURED_GRID with per-cell arrays)."""
from __future__ import annotations

import io

import numpy as np

from .mesh import Mesh

VTK_TRIANGLE = 5


def _fmt(values) -> str:
    return "\n".join(f"{v:.9g}" for v in values)


def write_vtk(path, mesh: Mesh, cell_data: dict | None = None, title: str = "ecoupler mesh") -> str:
    """Write the mesh and optional scalar cell arrays; returns the file text.

    Array names may contain characters VTK does not accept in identifiers
    (``|B|``); they are written with those characters replaced by ``_``.
    """
    buf = io.StringIO()
    nodes = mesh.nodes
    elems = mesh.elements
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write(title.replace("\n", " ")[:255] + "\n")
    buf.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    buf.write(f"POINTS {len(nodes)} double\n")
    buf.write("\n".join(f"{x:.12g} {y:.12g} 0" for x, y in nodes))
    buf.write(f"\nCELLS {len(elems)} {4 * len(elems)}\n")
    buf.write("\n".join(f"3 {a} {b} {c}" for a, b, c in elems))
    buf.write(f"\nCELL_TYPES {len(elems)}\n")
    buf.write("\n".join([str(VTK_TRIANGLE)] * len(elems)))
    buf.write(f"\nCELL_DATA {len(elems)}\n")
    arrays = {"region": mesh.region, "magnet": mesh.magnet}
    arrays.update(cell_data or {})
    for name, values in arrays.items():
        values = np.asarray(values)
        if values.shape != (len(elems),):
            raise ValueError(f"cell array {name!r} has shape {values.shape}, expected ({len(elems)},)")
        safe = "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in name).strip("_") or "field"
        if np.issubdtype(values.dtype, np.integer):
            buf.write(f"SCALARS {safe} int 1\nLOOKUP_TABLE default\n")
            buf.write("\n".join(str(int(v)) for v in values))
        else:
            buf.write(f"SCALARS {safe} double 1\nLOOKUP_TABLE default\n")
            buf.write(_fmt(values))
        buf.write("\n")
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def solution_cell_data(sol) -> dict:
    """Bx, By, |B|, Jz and H_rev (zero outside magnets) for a FieldSolution."""
    from .postprocess import element_fields, reverse_field

    fields = element_fields(sol)
    pm, H_rev = reverse_field(sol, fields)
    h = np.zeros(sol.mesh.n_elements)
    h[pm] = H_rev
    return {"Bx": fields.B[:, 0], "By": fields.B[:, 1], "|B|": fields.B_mag, "Jz": fields.J, "H_rev": h}


def read_vtk_cell_data(path) -> dict:
    """Minimal reader for files produced by ``write_vtk`` (used for round-trip checks)."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    out = {}
    i = 0
    n_cells = 0
    while i < len(lines):
        line = lines[i]
        if line.startswith("CELL_DATA"):
            n_cells = int(line.split()[1])
        elif line.startswith("SCALARS"):
            _, name, dtype, _ = line.split()
            vals = lines[i + 2: i + 2 + n_cells]
            out[name] = np.array(vals, dtype=int if dtype == "int" else float)
            i += 2 + n_cells
            continue
        i += 1
    return out
