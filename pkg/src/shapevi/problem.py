"""Bundles the data of one shape identification problem."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .adjoint_shape import (
    AdjointMode,
    AdjointSolution,
    ShapeGradient,
    assemble_shape_gradient,
    eval_lagrangian,
    solve_adjoint,
)
from .fem import BilinearCoeffs, assemble_bilinear, assemble_mass
from .fields import AnalyticField2D
from .mesh import TriMesh, interface_length
from .vi_solver import VISolution, solve_obstacle


@dataclass(frozen=True)
class Evaluation:
    mesh: TriMesh
    state: VISolution
    adjoint: AdjointSolution | None
    tracking: float
    regularization: float
    lagrangian: float
    gradient: ShapeGradient | None

    @property
    def objective(self) -> float:
        return self.tracking + self.regularization

    @property
    def n_active(self) -> int:
        return int(np.count_nonzero(self.state.active))


@dataclass(frozen=True)
class ShapeProblem:
    """State equation, obstacle, target and regularization weight."""

    coeffs: BilinearCoeffs
    source: object
    obstacle: AnalyticField2D
    target: AnalyticField2D
    c: float = 100.0
    nu: float = 1e-4
    tol: float = 1e-10
    max_iter: int = 100
    adjoint_mode: AdjointMode = AdjointMode.LIMIT
    active_term: str = "nodal"

    def state(self, mesh: TriMesh, K=None, **warm) -> VISolution:
        return solve_obstacle(mesh, self.coeffs, None, self.obstacle.value(mesh.nodes), c=self.c, tol=self.tol,
                              max_iter=self.max_iter, load=self.source.load(mesh), K=K, **warm)

    def objective(self, mesh: TriMesh, sol: VISolution | None = None, M=None) -> tuple[float, float]:
        sol = self.state(mesh) if sol is None else sol
        M = assemble_mass(mesh) if M is None else M
        e = sol.y - self.target.value(mesh.nodes)
        return float(0.5 * e @ (M @ e)), float(self.nu * interface_length(mesh))

    def evaluate(self, mesh: TriMesh, gradient: bool = True, corrupt: str | None = None) -> Evaluation:
        """State, adjoint, objective, full Lagrangian and (optionally) shape gradient."""
        K = assemble_bilinear(mesh, self.coeffs)
        M = assemble_mass(mesh)
        sol = self.state(mesh, K=K)
        ybar = self.target.value(mesh.nodes)
        adj = solve_adjoint(mesh, self.coeffs, sol, ybar, c=self.c, mode=self.adjoint_mode, K=K, M=M)
        tracking, reg = self.objective(mesh, sol, M)
        lag = eval_lagrangian(mesh, self.coeffs, sol.y, adj.v, sol.lam, self.source, sol.phi, ybar, self.c,
                              self.nu, K=K, M=M)
        g = None
        if gradient:
            g = assemble_shape_gradient(mesh, self.coeffs, sol, adj, self.source, self.target, self.obstacle,
                                        self.nu, active_term=self.active_term, K=K, M=M, corrupt=corrupt)
        return Evaluation(mesh, sol, adj, tracking, reg, lag, g)


def random_smooth_direction(mesh: TriMesh, rng: np.random.Generator, n_modes: int = 3, scale: float = 1.0):
    """``V = sum c_mn sin(m pi x) sin(n pi y)`` with normal coefficients, zero on the outer nodes.

    Vanishes on the boundary of the unit square; the outer nodes are zeroed
    explicitly for other boxes.
    """
    x, y = mesh.nodes[:, 0], mesh.nodes[:, 1]
    V = np.zeros((mesh.n_nodes, 2))
    for m in range(1, n_modes + 1):
        for n in range(1, n_modes + 1):
            coef = rng.standard_normal(2) / (m * n)
            V += np.outer(np.sin(m * np.pi * x) * np.sin(n * np.pi * y), coef)
    V[mesh.outer_mask] = 0.0
    return scale * V


def free_boundary_nodes(mesh: TriMesh, active) -> np.ndarray:
    """Active nodes sharing an edge with an inactive interior node."""
    active = np.asarray(active, dtype=bool)
    tri = mesh.triangles
    mixed = np.any(active[tri], axis=1) & ~np.all(active[tri], axis=1)
    out = np.zeros(mesh.n_nodes, dtype=bool)
    out[tri[mixed].ravel()] = True
    return out & active


def cutoff_away_from(mesh: TriMesh, V, nodes, width: float):
    """Scale ``V`` by ``s(dist / width)`` with ``s`` the C^1 smoothstep, ``dist`` the distance to ``nodes``.

    Used to build directions supported away from the contact boundary.
    """
    V = np.array(V, dtype=float)
    nodes = np.asarray(nodes, dtype=bool)
    if not np.any(nodes):
        return V
    dist, _ = cKDTree(mesh.nodes[nodes]).query(mesh.nodes)
    s = np.clip(dist / width, 0.0, 1.0)
    return V * (s * s * (3.0 - 2.0 * s))[:, None]


def admissible_directions(mesh: TriMesh, state: VISolution, rng: np.random.Generator, n: int, n_modes: int = 3,
                          scale: float = 0.1, cutoff_width: float = 0.1) -> list:
    """Random smooth directions for gradient checks.

    When the obstacle is in contact, each direction is cut off near the
    contact boundary so the active set stays put along the difference
    quotients.
    """
    fb = free_boundary_nodes(mesh, state.active)
    out = []
    for _ in range(n):
        V = random_smooth_direction(mesh, rng, n_modes, scale)
        out.append(cutoff_away_from(mesh, V, fb, cutoff_width) if np.any(fb) else V)
    return out
