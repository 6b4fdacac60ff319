"""Gradient descent on node positions with a Riesz-lifted shape gradient.

Each iteration solves the state and adjoint, assembles the nodal covector
``g``, lifts it to a deformation ``W`` by the chosen inner product

    (W, V)_H = -<g, V>   for all V vanishing on the outer boundary,

and moves the mesh by ``s W`` with an Armijo backtracking on ``s``.
Trial steps that invert a triangle or break the quality floor are shrunk
like rejected steps.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, ElementInversion, LineSearchFailure, QualityCollapse
from .fem import BilinearCoeffs, assemble_bilinear, solve_constrained
from .mesh import (
    Deformation,
    TriMesh,
    deform,
    interface_mean_radius,
    mesh_quality,
)
from .problem import Evaluation, ShapeProblem

log = logging.getLogger(__name__)

RIESZ_CHOICES = ("elasticity", "h1")


@dataclass
class OptConfig:
    max_outer_iters: int = 200
    grad_tol: float = 1e-7
    rel_grad_tol: float = 1e-4
    riesz: str = "elasticity"
    mu: float = 1.0
    mu_interface: float | None = None
    lame: float = 0.0
    h1_mass: float = 0.0
    step_init: float = 1.0
    armijo_c1: float = 1e-4
    step_shrink: float = 0.5
    max_shrinks: int = 30
    quality_floor: float = 0.2

    def __post_init__(self):
        if self.riesz not in RIESZ_CHOICES:
            raise ValueError(f"riesz must be one of {RIESZ_CHOICES}, got {self.riesz!r}")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if not 0 < self.armijo_c1 < 1:
            raise ValueError("armijo constant must lie in (0, 1)")
        if self.mu <= 0 or self.lame < 0 or self.h1_mass < 0:
            raise ValueError("inner product needs mu > 0 and nonnegative lame and h1_mass")
        if self.mu_interface is not None and self.mu_interface <= 0:
            raise ValueError("mu_interface must be positive")


@dataclass
class OptRecord:
    iteration: int
    objective: float
    tracking: float
    regularization: float
    n_active: int
    step: float
    stationarity: float
    quality: float
    mean_radius: float


@dataclass
class OptTrace:
    records: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    seconds: float = 0.0

    def append(self, rec: OptRecord):
        self.records.append(rec)

    @property
    def objective(self):
        return np.array([r.objective for r in self.records])

    @property
    def stationarity(self):
        return np.array([r.stationarity for r in self.records])

    def write_csv(self, path) -> None:
        names = list(OptRecord.__dataclass_fields__)
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=names)
            w.writeheader()
            for r in self.records:
                w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in asdict(r).items()})


def stiffness_weight(mesh: TriMesh, cfg: OptConfig) -> np.ndarray:
    """Per-triangle Lame parameter ``mu``.

    Constant ``cfg.mu`` unless ``cfg.mu_interface`` is set; then ``mu`` solves
    a Laplace problem with ``mu_interface`` on the interface and ``cfg.mu``
    on the outer boundary, which stiffens the mesh around the moving curve.
    """
    if cfg.mu_interface is None:
        return np.full(mesh.n_triangles, cfg.mu)
    K = assemble_bilinear(mesh, BilinearCoeffs())
    fixed = mesh.outer_mask | mesh.interface_mask
    vals = np.where(mesh.interface_mask, cfg.mu_interface, cfg.mu)
    m = solve_constrained(K, np.zeros(mesh.n_nodes), fixed, vals)
    return m[mesh.triangles].mean(axis=1)


def inner_product_matrix(mesh: TriMesh, cfg: OptConfig) -> sp.csr_matrix:
    """Vector-valued P1 stiffness of the Riesz inner product; unknowns interleaved ``(x0, y0, x1, ...)``."""
    G = mesh.hat_gradients
    area = mesh.areas
    T = mesh.n_triangles
    # loc[t, k, c, l, e] = (phi_k e_c, phi_l e_e)_H on triangle t
    loc = np.zeros((T, 3, 2, 3, 2))
    if cfg.riesz == "elasticity":
        mu = stiffness_weight(mesh, cfg)
        # 2 mu eps(phi_k e_c) : eps(phi_l e_e) + lame div div
        for c in range(2):
            for e in range(2):
                gkgl = np.einsum("tk,tl->tkl", G[:, :, c], G[:, :, e])
                dot = np.einsum("tki,tli->tkl", G, G)
                loc[:, :, c, :, e] = mu[:, None, None] * (dot * (c == e) + np.einsum("tk,tl->tkl", G[:, :, e], G[:, :, c]))
                loc[:, :, c, :, e] += cfg.lame * gkgl
    else:
        dot = np.einsum("tki,tli->tkl", G, G)
        for c in range(2):
            loc[:, :, c, :, c] = dot
    loc *= area[:, None, None, None, None]
    if cfg.riesz == "h1" and cfg.h1_mass:
        m = (np.ones((3, 3)) + np.eye(3)) / 12.0
        for c in range(2):
            loc[:, :, c, :, c] += cfg.h1_mass * area[:, None, None] * m
    dof = (2 * mesh.triangles[:, :, None] + np.arange(2)[None, None, :]).reshape(T, 6)
    loc = loc.reshape(T, 6, 6)
    rows = np.repeat(dof, 6, axis=1).ravel()
    cols = np.tile(dof, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    return sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(n, n))


def descent_direction(mesh: TriMesh, g, cfg: OptConfig, B=None) -> np.ndarray:
    """Riesz representative ``W`` of ``-g``, zero on the outer nodes, shape ``(N, 2)``."""
    B = inner_product_matrix(mesh, cfg) if B is None else B
    fixed = np.repeat(mesh.outer_mask, 2)
    W = solve_constrained(B, -np.asarray(g, dtype=float).ravel(), fixed)
    return W.reshape(-1, 2)


def stationarity_measure(g, W) -> float:
    """``sqrt(-<g, W>)``, the dual norm of ``g`` in the Riesz inner product."""
    return float(np.sqrt(max(-np.sum(np.asarray(g) * W), 0.0)))


def line_search(problem: ShapeProblem, ev: Evaluation, W, slope: float, s0: float, cfg: OptConfig):
    """Armijo backtracking. Returns ``(step, new_evaluation)``.

    Raises :class:`LineSearchFailure` after ``cfg.max_shrinks`` rejections.
    """
    J0 = ev.objective
    s = s0
    reasons = []
    for _ in range(cfg.max_shrinks + 1):
        try:
            moved = deform(ev.mesh, Deformation(W, s), quality_floor=cfg.quality_floor)
            trial = problem.evaluate(moved)
        except (ElementInversion, QualityCollapse, ConvergenceError) as exc:
            reasons.append(type(exc).__name__)
            s *= cfg.step_shrink
            continue
        if trial.objective <= J0 + cfg.armijo_c1 * s * slope:
            return s, trial
        reasons.append("armijo")
        s *= cfg.step_shrink
    raise LineSearchFailure(f"no acceptable step after {cfg.max_shrinks} shrinks (last rejections: {reasons[-3:]})")


def optimize(problem: ShapeProblem, mesh: TriMesh, cfg: OptConfig | None = None, callback=None):
    """Minimise the objective over node positions. Returns ``(mesh, trace)``.

    Stops when the stationarity measure falls below ``grad_tol`` or
    ``rel_grad_tol`` times its initial value, or after ``max_outer_iters`` steps.
    A line search failure ends the run with ``trace.reason`` set.
    """
    cfg = OptConfig() if cfg is None else cfg
    t_start = time.perf_counter()
    trace = OptTrace()
    ev = problem.evaluate(mesh)
    step = 0.0
    first = None
    for it in range(cfg.max_outer_iters + 1):
        B = inner_product_matrix(ev.mesh, cfg)
        W = descent_direction(ev.mesh, ev.gradient.g, cfg, B)
        meas = stationarity_measure(ev.gradient.g, W)
        first = meas if first is None else first
        trace.append(OptRecord(it, ev.objective, ev.tracking, ev.regularization, ev.n_active, step, meas,
                               mesh_quality(ev.mesh), interface_mean_radius(ev.mesh)))
        if callback is not None:
            callback(trace.records[-1], ev)
        log.info("it %3d  J=%.6e  stat=%.3e  step=%.2e", it, ev.objective, meas, step)
        if meas <= cfg.grad_tol or meas <= cfg.rel_grad_tol * first:
            trace.converged, trace.reason = True, "stationarity"
            break
        if it == cfg.max_outer_iters:
            trace.reason = "max_iter"
            break
        try:
            step, ev = line_search(problem, ev, W, -meas**2, cfg.step_init, cfg)
        except LineSearchFailure as exc:
            trace.reason = f"line search: {exc}"
            break
    trace.seconds = time.perf_counter() - t_start
    return ev.mesh, trace
