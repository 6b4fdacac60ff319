"""Obstacle problem ``y <= phi`` via the primal-dual active set method.

The discrete complementarity system is

    K y + D lam = F,   lam >= 0,   y <= phi,   lam (y - phi) = 0

on interior nodes, with ``D`` the lumped nodal masses so that ``lam`` is a
nodal representative of an L2 multiplier. PDAS predicts the active set from
``lam + c (y - phi) > 0`` (ties count as inactive), solves with ``y = phi``
there, recovers ``lam`` as the scaled residual, and stops when the set
repeats.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, InfeasibleObstacle, SolverError
from .fem import BilinearCoeffs, assemble_bilinear, assemble_load, lumped_mass, solve_constrained
from .mesh import TriMesh


@dataclass(frozen=True)
class VISolution:
    y: np.ndarray
    lam: np.ndarray
    active: np.ndarray  # PDAS set {lam + c (y - phi) > 0}, boolean per node
    comp_residual: float
    feas_residual: float
    iterations: int
    phi: np.ndarray = None

    def contact_nodes(self, tol=1e-10):
        """Nodes where the constraint binds, ``y >= phi - tol``.

        Differs from :attr:`active` only on biactive nodes (``y = phi`` with
        ``lam = 0``).
        """
        return self.y >= self.phi - tol


def _residuals(y, lam, phi, interior):
    comp = float(np.max(np.abs(lam * (y - phi))[interior], initial=0.0))
    feas = float(max(np.max((y - phi)[interior], initial=0.0), np.max(-lam, initial=0.0), 0.0))
    return comp, feas


def solve_obstacle(mesh: TriMesh, coeffs: BilinearCoeffs, f, phi, c: float = 100.0, tol: float = 1e-10,
                   max_iter: int = 100, load=None, y0=None, lam0=None, K=None) -> VISolution:
    """Discrete obstacle problem by PDAS.

    ``f`` holds nodal source values (ignored if ``load`` is given directly).
    ``y0``/``lam0`` warm start the iteration; by default it starts from the
    unconstrained solution with ``lam = 0``.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    phi = np.asarray(phi, dtype=float)
    outer = mesh.outer_mask
    if np.any(phi[outer] < 0):
        raise InfeasibleObstacle("obstacle negative on the outer boundary: constraint set is empty")
    K = assemble_bilinear(mesh, coeffs) if K is None else K
    F = assemble_load(mesh, f) if load is None else np.asarray(load, dtype=float)
    D = lumped_mass(mesh)
    interior = ~outer

    if y0 is None:
        y = solve_constrained(K, F, outer)
        lam = np.zeros(mesh.n_nodes)
    else:
        y, lam = np.asarray(y0, dtype=float), np.asarray(lam0, dtype=float)
    active = interior & (lam + c * (y - phi) > 0)

    for it in range(1, max_iter + 1):
        fixed = outer | active
        vals = np.where(active, phi, 0.0)
        y = solve_constrained(K, F, fixed, vals)
        lam = np.zeros(mesh.n_nodes)
        lam[active] = (F - K @ y)[active] / D[active]
        new_active = interior & (lam + c * (y - phi) > 0)
        if np.array_equal(new_active, active):
            comp, feas = _residuals(y, lam, phi, interior)
            return VISolution(y, lam, active, comp, feas, it, phi)
        active = new_active
    raise ConvergenceError(f"PDAS did not settle its active set in {max_iter} iterations")


def active_set_triangles(sol: VISolution, mesh: TriMesh) -> np.ndarray:
    """Triangles with all three vertices in the PDAS active set (boolean mask)."""
    return np.all(sol.active[mesh.triangles], axis=1)


def oracle_small(mesh: TriMesh, coeffs: BilinearCoeffs, f, phi, load=None, tol: float = 1e-12,
                 max_nodes: int = 200, max_iter: int = 2_000_000) -> VISolution:
    """Reference solution by projected gradient on the equivalent QP.

    Minimises ``1/2 y^T K y - F^T y`` over ``y <= phi`` on interior nodes with
    a fixed step ``1/L``. Needs a symmetric form and a small mesh.
    """
    if mesh.n_nodes > max_nodes:
        raise ValueError(f"oracle limited to {max_nodes} nodes")
    K = assemble_bilinear(mesh, coeffs).toarray()
    if np.max(np.abs(K - K.T)) > 1e-12 * np.max(np.abs(K)):
        raise SolverError("oracle needs a symmetric bilinear form")
    F = assemble_load(mesh, f) if load is None else np.asarray(load, dtype=float)
    phi = np.asarray(phi, dtype=float)
    interior = ~mesh.outer_mask
    Ki = K[np.ix_(interior, interior)]
    Fi = F[interior]
    ub = phi[interior]
    L = float(np.max(np.linalg.eigvalsh(Ki)))
    y = np.minimum(0.0, ub)
    for _ in range(max_iter):
        y_new = np.minimum(ub, y - (Ki @ y - Fi) / L)
        step = np.max(np.abs(y_new - y))
        y = y_new
        if step <= tol:
            break
    else:
        raise ConvergenceError("projected gradient oracle did not converge")
    full = np.zeros(mesh.n_nodes)
    full[interior] = y
    D = lumped_mass(mesh)
    lam = np.zeros(mesh.n_nodes)
    contact = interior & (full >= phi - 1e-9)
    lam[contact] = np.maximum(0.0, (F - K @ full)[contact] / D[contact])
    active = contact & (lam > 0)
    comp, feas = _residuals(full, lam, phi, interior)
    return VISolution(full, lam, active, comp, feas, 0, phi)
