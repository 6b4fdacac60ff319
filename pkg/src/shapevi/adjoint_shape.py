"""Adjoint of the obstacle-constrained tracking problem and its shape gradient.

With state ``y`` (active set ``A``) and target ``ybar`` the adjoint ``v``
solves

    a(w, v) - c m_A(v, w) = int (y - ybar) w        for all w in H^1_0  (paper-exact)
    a(w, v) = int (y - ybar) w,  v = 0 on A        for all w off A     (limit)

and the Lagrangian is

    L = 1/2 int (y - ybar)^2 - a(y, v) + int f v - int max(0, lam + c (y - phi)) v
        + nu |Gamma|,

which equals the objective at a solved state. Its semiderivative in the
direction of a P1 deformation field ``V`` is assembled as a nodal covector
``g`` with ``<g, V> = dL[V]``:

    divergence           int div V [1/2 (y - ybar)^2 - chi(y, v) + f v]
    target_transport    -int (y - ybar) grad(ybar) . V
    source_transport     int v grad(f) . V
    bilinear_correction -int D_m chi(y, v)   (the grad V terms of a and d)
    active_set           obstacle transport grad(phi) . V on A
    perimeter            nu d|Gamma|[V]

``chi`` is the integrand of ``a``. All terms are elementwise exact for P1
fields, so ``g`` is the derivative of the discrete objective itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse.linalg as spla

from .errors import AdjointIndefinite, ElementInversion, MeshError, QualityCollapse
from .fem import (
    _LOCAL_MASS,
    BilinearCoeffs,
    assemble_bilinear,
    assemble_mass,
    assemble_mass_indicator,
    lumped_mass,
    solve_constrained,
)
from .mesh import Deformation, TriMesh, deform, interface_length, perimeter_gradient
from .vi_solver import VISolution, active_set_triangles

PARTS = ("divergence", "target_transport", "source_transport", "bilinear_correction", "active_set", "perimeter")


class AdjointMode(str, Enum):
    PAPER_EXACT = "paper-exact"
    LIMIT = "limit"


@dataclass(frozen=True)
class AdjointSolution:
    v: np.ndarray
    residual: float
    mode: AdjointMode
    min_eigenvalue: float | None = None


@dataclass(frozen=True)
class ShapeGradient:
    g: np.ndarray
    parts: dict = field(default_factory=dict)

    def pair(self, V) -> float:
        return directional_semiderivative(self, V)


def _smallest_eigenvalue(A):
    n = A.shape[0]
    if n <= 3000:
        return float(np.linalg.eigvalsh(A.toarray())[0])
    return float(spla.eigsh(A, k=1, which="SA", tol=1e-8, maxiter=20 * n, return_eigenvectors=False)[0])


def solve_adjoint(mesh: TriMesh, coeffs: BilinearCoeffs, sol: VISolution, ybar, c: float = 100.0,
                  mode=AdjointMode.LIMIT, K=None, M=None) -> AdjointSolution:
    """Adjoint state for the nodal target values ``ybar``.

    Paper-exact mode raises :class:`AdjointIndefinite` when the operator
    ``a - c m_A`` is not positive definite on H^1_0; limit mode is always
    solvable.
    """
    mode = AdjointMode(mode)
    K = assemble_bilinear(mesh, coeffs) if K is None else K
    M = assemble_mass(mesh) if M is None else M
    rhs = M @ (sol.y - np.asarray(ybar, dtype=float))
    outer = mesh.outer_mask
    min_eig = None
    if mode is AdjointMode.LIMIT:
        op = K.T.tocsr()
        fixed = outer | sol.active
    else:
        op = (K.T - c * assemble_mass_indicator(mesh, active_set_triangles(sol, mesh))).tocsr()
        fixed = outer
        if np.any(active_set_triangles(sol, mesh)):
            free = ~fixed
            sym = 0.5 * (op + op.T)
            min_eig = _smallest_eigenvalue(sym[free][:, free])
            if min_eig <= 0:
                raise AdjointIndefinite(
                    f"paper-exact adjoint operator is not positive definite for c={c:g} "
                    f"(smallest eigenvalue {min_eig:.3e}); use limit mode", min_eig)
    v = solve_constrained(op, rhs, fixed)
    free = ~fixed
    res = float(np.max(np.abs((op @ v - rhs)[free]), initial=0.0))
    return AdjointSolution(v, res, mode, min_eig)


def adjoint_residual(mesh, coeffs, y, v, ybar, active_triangles, c, K=None, M=None):
    """Nodal ``int (y - ybar) w - a(w, v) + c int_A v w`` for every hat function ``w``."""
    K = assemble_bilinear(mesh, coeffs) if K is None else K
    M = assemble_mass(mesh) if M is None else M
    MA = assemble_mass_indicator(mesh, active_triangles)
    return M @ (y - ybar) - K.T @ v + c * (MA @ v)


def state_residual(mesh, coeffs, y, lam, load, phi, c, K=None):
    """Nodal ``a(y, p) + (max(0, lam + c (y - phi)), p) - (f, p)`` for every hat ``p``.

    The max term uses the lumped nodal weights, matching the state solver.
    """
    K = assemble_bilinear(mesh, coeffs) if K is None else K
    D = lumped_mass(mesh)
    return K @ y + D * np.maximum(0.0, lam + c * (y - phi)) - load


def eval_lagrangian(mesh: TriMesh, coeffs: BilinearCoeffs, y, v, lam, source, phi, ybar, c: float, nu: float,
                    K=None, M=None) -> float:
    """Full Lagrangian including ``nu |Gamma|``; nodal arrays for ``y, v, lam, phi, ybar``."""
    K = assemble_bilinear(mesh, coeffs) if K is None else K
    M = assemble_mass(mesh) if M is None else M
    e = np.asarray(y) - np.asarray(ybar)
    D = lumped_mass(mesh)
    constraint = K @ y - source.load(mesh) + D * np.maximum(0.0, lam + c * (np.asarray(y) - phi))
    return float(0.5 * e @ (M @ e) - np.asarray(v) @ constraint + nu * interface_length(mesh))


def _scatter_nodes(mesh, local):
    """Sum ``(T, 3, 2)`` element covectors into ``(N, 2)``."""
    out = np.zeros((mesh.n_nodes, 2))
    np.add.at(out, mesh.triangles.ravel(), local.reshape(-1, 2))
    return out


def divergence_covector(mesh: TriMesh, element_integrals) -> np.ndarray:
    """Covector of ``V -> sum_T div(V)|_T * element_integrals[T]``.

    With ``element_integrals = areas`` this pairs to ``int div V dx``.
    """
    w = np.broadcast_to(np.asarray(element_integrals, dtype=float), (mesh.n_triangles,))
    return _scatter_nodes(mesh, mesh.hat_gradients * w[:, None, None])


def volume_pairing_covector(mesh: TriMesh, integrand: float = 1.0) -> np.ndarray:
    """Divergence part with the bracket forced to a constant (test hook)."""
    return divergence_covector(mesh, integrand * mesh.areas)


def _element_data(mesh, coeffs, y, v, e, source):
    G = mesh.hat_gradients
    area = mesh.areas
    yT, vT, eT = y[mesh.triangles], v[mesh.triangles], e[mesh.triangles]
    gy = np.einsum("tk,tki->ti", yT, G)
    gv = np.einsum("tk,tki->ti", vT, G)
    A = coeffs.A
    dvec = coeffs.dvec
    ymean, vmean = yT.mean(axis=1), vT.mean(axis=1)
    chi = area * (np.einsum("ti,ij,tj->t", gy, A, gv) + (gy @ dvec) * vmean + ymean * (gv @ dvec))
    chi += coeffs.b * area / 3.0 * np.sum(yT * vT, axis=1)
    tracking = 0.5 * area * np.einsum("ti,ij,tj->t", eT, _LOCAL_MASS, eT)
    fv = source.element_integrals(mesh, v)
    return G, area, gy, gv, ymean, vmean, chi, tracking, fv


def assemble_shape_gradient(mesh: TriMesh, coeffs: BilinearCoeffs, sol: VISolution, adj: AdjointSolution, source,
                            ybar, phi, nu: float, active_term: str = "nodal", K=None, M=None,
                            corrupt: str | None = None) -> ShapeGradient:
    """Shape gradient of the full Lagrangian at ``(sol, adj)``.

    ``ybar`` and ``phi`` are analytic fields (their gradients enter the
    transport terms). ``active_term='nodal'`` pairs the adjoint residual on
    active nodes with the obstacle transport, which is exact for the discrete
    problem; ``'triangles'`` integrates ``(phi - ybar) grad(phi) . V`` over
    triangles with all vertices active. ``corrupt`` doubles the named part
    (for testing the gradient checker).
    """
    K = assemble_bilinear(mesh, coeffs) if K is None else K
    M = assemble_mass(mesh) if M is None else M
    X = mesh.nodes
    y, v = sol.y, adj.v
    ybar_h = ybar.value(X)
    e = y - ybar_h
    G, area, gy, gv, ymean, vmean, chi, tracking, fv = _element_data(mesh, coeffs, y, v, e, source)

    parts = {}
    parts["divergence"] = divergence_covector(mesh, tracking - chi + fv)
    parts["target_transport"] = -(M @ e)[:, None] * ybar.gradient(X)
    parts["source_transport"] = source.transport(mesh, v)

    A, dvec = coeffs.A, coeffs.dvec
    GAv = np.einsum("tki,ij,tj->tk", G, A, gv)
    GAy = np.einsum("tki,ij,tj->tk", G, A, gy)
    local = GAv[:, :, None] * gy[:, None, :] + GAy[:, :, None] * gv[:, None, :]
    if np.any(dvec):
        Gd = G @ dvec
        local += Gd[:, :, None] * (gy * vmean[:, None] + ymean[:, None] * gv)[:, None, :]
    parts["bilinear_correction"] = _scatter_nodes(mesh, area[:, None, None] * local)

    grad_phi = phi.gradient(X)
    if active_term == "nodal":
        r = M @ e - K.T @ v
        parts["active_set"] = np.where(sol.active[:, None], r[:, None] * grad_phi, 0.0)
    elif active_term == "triangles":
        MA = assemble_mass_indicator(mesh, active_set_triangles(sol, mesh))
        parts["active_set"] = (MA @ (phi.value(X) - ybar_h))[:, None] * grad_phi
    else:
        raise ValueError(f"unknown active_term {active_term!r}")
    parts["perimeter"] = nu * perimeter_gradient(mesh)

    if corrupt is not None:
        if corrupt not in parts:
            raise ValueError(f"unknown gradient part {corrupt!r}")
        parts[corrupt] = 2.0 * parts[corrupt]
    outer = mesh.outer_mask
    for p in parts.values():
        p[outer] = 0.0
    return ShapeGradient(sum(parts.values()), parts)


def directional_semiderivative(g: ShapeGradient, V) -> float:
    V = np.asarray(V, dtype=float)
    if V.shape != g.g.shape:
        raise ValueError(f"direction has shape {V.shape}, gradient {g.g.shape}")
    return float(np.sum(g.g * V))


def laplacian_shape_pairing(mesh: TriMesh, sol: VISolution, adj: AdjointSolution, source, ybar, phi, nu, V) -> float:
    """``dL[V]`` for ``a(y, v) = int grad y . grad v`` by direct contraction with ``grad V``.

    Independent of :func:`assemble_shape_gradient`: builds the elementwise
    Jacobian of the P1 field ``V`` and evaluates

        int -(y - ybar) grad(ybar).V + grad y^T (DV + DV^T) grad v
            + div V [1/2 (y - ybar)^2 - grad y . grad v + f v] + v grad(f).V
        + obstacle transport on A + nu d|Gamma|[V].
    """
    V = np.asarray(V, dtype=float).copy()
    V[mesh.outer_mask] = 0.0
    X = mesh.nodes
    G, area = mesh.hat_gradients, mesh.areas
    y, v = sol.y, adj.v
    e = y - ybar.value(X)
    DV = np.einsum("tkl,tki->tli", V[mesh.triangles], G)  # DV[t, l, i] = d_i V_l
    div = np.trace(DV, axis1=1, axis2=2)
    gy = np.einsum("tk,tki->ti", y[mesh.triangles], G)
    gv = np.einsum("tk,tki->ti", v[mesh.triangles], G)
    eT = e[mesh.triangles]
    half_e2 = 0.5 * area * np.einsum("ti,ij,tj->t", eT, _LOCAL_MASS, eT)
    bracket = half_e2 - area * np.sum(gy * gv, axis=1) + source.element_integrals(mesh, v)
    total = np.sum(div * bracket)
    total += np.sum(area * np.einsum("ti,tij,tj->t", gy, DV + np.transpose(DV, (0, 2, 1)), gv))
    M = assemble_mass(mesh)
    total -= e @ (M @ np.sum(ybar.gradient(X) * V, axis=1))
    total += np.sum(source.transport(mesh, v) * V)
    K = assemble_bilinear(mesh, BilinearCoeffs())
    r = M @ e - K.T @ v
    total += np.sum((r * np.sum(phi.gradient(X) * V, axis=1))[sol.active])
    ed = mesh.interface_edges
    if len(ed):
        d = X[ed[:, 1]] - X[ed[:, 0]]
        total += nu * np.sum(np.sum(d * (V[ed[:, 1]] - V[ed[:, 0]]), axis=1) / np.linalg.norm(d, axis=1))
    return float(total)


# -- finite-difference oracle ----------------------------------------------------


@dataclass
class FDCheck:
    t_steps: list
    quotients: list
    errors: list
    pairing: float
    slope: float
    relative_error: float
    notes: list = field(default_factory=list)


def _fit_slope(ts, errs):
    ts, errs = np.asarray(ts, float), np.asarray(errs, float)
    ok = errs > 0
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(ts[ok]), np.log(errs[ok]), 1)[0])


def fd_check_shape_gradient(problem, mesh: TriMesh, V, t_steps=(1e-2, 1e-3, 1e-4), gradient=None,
                            quality_floor=None) -> FDCheck:
    """Compare ``<g, V>`` with difference quotients of the full Lagrangian.

    At each ``t`` the state and adjoint are re-solved on ``deform(mesh, V, t)``.
    Steps at which the deformation fails are halved (up to 10 times) and the
    substitution is recorded in ``notes``.
    """
    V = np.asarray(V, dtype=float)
    base = problem.evaluate(mesh)
    g = base.gradient if gradient is None else gradient
    pairing = directional_semiderivative(g, V)
    L0 = base.lagrangian
    ts, qs, errs, notes = [], [], [], []
    for t in t_steps:
        t = float(t)
        for _ in range(10):
            try:
                moved = deform(mesh, Deformation(V, t), quality_floor=quality_floor)
                break
            except (ElementInversion, QualityCollapse) as exc:
                notes.append(f"t={t:g}: {exc}; halving")
                t *= 0.5
        else:
            raise MeshError("deformation failed for every trial step")
        Lt = problem.evaluate(moved, gradient=False).lagrangian
        q = (Lt - L0) / t
        ts.append(t)
        qs.append(q)
        errs.append(abs(q - pairing))
    slope = _fit_slope(ts, errs)
    rel = errs[-1] / max(abs(pairing), 1e-300) if errs else 0.0
    if pairing == 0.0 and errs and errs[-1] == 0.0:
        rel = 0.0
    return FDCheck(ts, qs, errs, pairing, slope, rel, notes)
