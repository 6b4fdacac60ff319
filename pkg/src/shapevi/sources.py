"""Right-hand sides ``f`` of the state problem.

Two ways ``f`` can depend on the shape:

* :class:`PiecewiseSource` takes one constant per subdomain, so ``f`` moves
  with the interior/exterior triangles and has no transport term.
* :class:`AnalyticSource` is a catalog field, interpolated to P1 and
  transported as ``grad f . V`` at the nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import _LOCAL_MASS, assemble_load, assemble_load_piecewise, assemble_mass
from .fields import AnalyticField2D
from .mesh import Sub, TriMesh


@dataclass(frozen=True)
class PiecewiseSource:
    f_int: float
    f_out: float

    def per_triangle(self, mesh: TriMesh):
        return np.where(mesh.subdomain == Sub.INT, self.f_int, self.f_out)

    def load(self, mesh: TriMesh):
        return assemble_load_piecewise(mesh, self.per_triangle(mesh))

    def element_integrals(self, mesh: TriMesh, v):
        """``int_T f v`` per triangle."""
        return self.per_triangle(mesh) * mesh.areas * np.asarray(v)[mesh.triangles].mean(axis=1)

    def transport(self, mesh: TriMesh, v):
        """Covector of ``V -> int (D_m f) v``; zero for elementwise constants."""
        return np.zeros((mesh.n_nodes, 2))

    def nodal(self, mesh: TriMesh):
        """Area-weighted nodal average, for output only."""
        w = mesh.areas / 3.0
        num = np.bincount(mesh.triangles.ravel(), np.repeat(w * self.per_triangle(mesh), 3), mesh.n_nodes)
        den = np.bincount(mesh.triangles.ravel(), np.repeat(w, 3), mesh.n_nodes)
        return num / den


@dataclass(frozen=True)
class AnalyticSource:
    field: AnalyticField2D

    def nodal(self, mesh: TriMesh):
        return self.field.value(mesh.nodes)

    def load(self, mesh: TriMesh):
        return assemble_load(mesh, self.nodal(mesh))

    def element_integrals(self, mesh: TriMesh, v):
        fT = self.nodal(mesh)[mesh.triangles]
        vT = np.asarray(v)[mesh.triangles]
        return mesh.areas * np.einsum("ti,ij,tj->t", fT, _LOCAL_MASS, vT)

    def transport(self, mesh: TriMesh, v):
        Mv = assemble_mass(mesh) @ np.asarray(v)
        return Mv[:, None] * self.field.gradient(mesh.nodes)
