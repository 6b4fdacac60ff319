"""VTK legacy ASCII export.

Output is a pure function of the inputs: fields are written in the order
given and numbers with ``%.17g``, so identical inputs give identical bytes.
"""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh

_VTK_TRIANGLE = 5


def _fmt(a):
    return " ".join("%.17g" % v for v in a)


def write_vtk(path, mesh: TriMesh, point_data=None, cell_data=None, title: str = "shapevi") -> None:
    """Write an UNSTRUCTURED_GRID with P1 point fields and per-triangle cell fields.

    ``point_data`` maps names to ``(N,)`` scalars or ``(N, 2)`` vectors;
    ``cell_data`` to ``(T,)`` scalars. With neither, only the geometry is
    written.
    """
    point_data = dict(point_data or {})
    cell_data = dict(cell_data or {})
    N, T = mesh.n_nodes, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {N} double"]
    lines += [_fmt((x, y, 0.0)) for x, y in mesh.nodes]
    lines.append(f"CELLS {T} {4 * T}")
    lines += ["3 %d %d %d" % tuple(t) for t in mesh.triangles]
    lines.append(f"CELL_TYPES {T}")
    lines += [str(_VTK_TRIANGLE)] * T
    if point_data:
        lines.append(f"POINT_DATA {N}")
        for name, arr in point_data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.shape == (N,):
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += ["%.17g" % v for v in arr]
            elif arr.shape == (N, 2):
                lines.append(f"VECTORS {name} double")
                lines += [_fmt((u, v, 0.0)) for u, v in arr]
            else:
                raise ValueError(f"point field {name!r} has shape {arr.shape}, expected ({N},) or ({N}, 2)")
    if cell_data:
        lines.append(f"CELL_DATA {T}")
    for name, arr in cell_data.items():
        arr = np.asarray(arr, dtype=float)
        if arr.shape != (T,):
            raise ValueError(f"cell field {name!r} has shape {arr.shape}, expected ({T},)")
        lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        lines += ["%.17g" % v for v in arr]
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def state_fields(mesh: TriMesh, sol, phi=None, target=None, extra_points=None):
    """Standard point and cell fields for a solved state."""
    pts = {"y": sol.y, "lambda": sol.lam}
    if phi is not None:
        pts["phi"] = phi
    if target is not None:
        pts["target"] = target
    pts.update(extra_points or {})
    active_tri = np.all(sol.active[mesh.triangles], axis=1)
    cells = {"subdomain": np.asarray(mesh.subdomain, dtype=float), "active": active_tri.astype(float)}
    return pts, cells
