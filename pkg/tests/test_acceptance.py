"""Acceptance checks, one test per criterion.

Each test records a line in ``conftest.ACCEPTANCE``; the terminal summary
prints ``criterion N: PASS|FAIL`` with the measured numbers.
"""

import time
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from shapevi.adjoint_shape import (
    adjoint_residual,
    directional_semiderivative,
    fd_check_shape_gradient,
    laplacian_shape_pairing,
    state_residual,
    volume_pairing_covector,
)
from shapevi.config import build, parse_config
from shapevi.fem import BilinearCoeffs
from shapevi.fields import affine, bump, constant, product, sum_of
from shapevi.hadamard_calc import (
    ABS,
    FD_STEPS,
    LIBRARY,
    SQUARE,
    centered_quadratic,
    compose,
    dh_chain,
    dh_linear_comb,
    dh_max,
    fd_one_sided,
    linear_comb,
    max_pair,
    shifted_max,
    verify_material_gradient_rule,
)
from shapevi.mesh import Marker, generate_disk_in_square, interface_mean_radius, structured_square
from shapevi.optimizer import optimize
from shapevi.problem import ShapeProblem, admissible_directions, random_smooth_direction
from shapevi.sources import AnalyticSource, PiecewiseSource
from shapevi.vi_solver import active_set_triangles, oracle_small, solve_obstacle

SHIPPED = Path(__file__).resolve().parents[1] / "configs" / "disk_identification.yaml"


@contextmanager
def criterion(num):
    """Time the block, record pass/fail from the checks it collects, then assert."""
    checks = []
    t0 = time.perf_counter()
    try:
        yield checks
    except Exception as exc:
        checks.append((False, f"raised {type(exc).__name__}: {exc}"))
    elapsed = time.perf_counter() - t0
    ok = bool(checks) and all(c[0] for c in checks)
    details = "; ".join(c[1] for c in checks)
    ACCEPTANCE.append((num, ok, f"[{elapsed:.1f} s] {details}"))
    assert ok, details


# -- 1 -------------------------------------------------------------------------


def test_criterion_1_max_table():
    with criterion(1) as checks:
        t0 = time.perf_counter()
        rng = np.random.default_rng(2024)
        xs = rng.uniform(-1, 1, 1000)
        xs[::10] = 0.0  # a tenth of the grid sits on the kink
        vs = rng.uniform(-1, 1, 1000)
        xs = np.concatenate([xs, [0.0, 0.0, 0.0, 1e-300, -1e-300, 5.0, -5.0]])
        vs = np.concatenate([vs, [-1.0, 1.0, 0.0, -1.0, 1.0, 0.0, 3.0]])
        branch_errors, value_err = 0, 0.0
        for x, v in zip(xs, vs):
            got = dh_max(float(x), float(v))
            want = v if x > 0 else (0.0 if x < 0 else max(0.0, v))
            branch_errors += got != want
            # defining quotient on a step short enough to stay on x's side
            t = 2.0**-80 if x == 0 else abs(x) / 8
            q = (max(0.0, x + t * v) - max(0.0, x)) / t
            value_err = max(value_err, abs(got - q))
        assert dh_max(0.0, -2.0) == 0.0 and dh_max(0.0, 2.0) == 2.0
        runtime = time.perf_counter() - t0
        checks.append((branch_errors == 0, f"{len(xs)} points, {branch_errors} branch errors"))
        checks.append((value_err <= 1e-14, f"max value error {value_err:.1e}"))
        checks.append((runtime < 1.0, f"runtime {runtime:.2f} s < 1 s"))


# -- 2 -------------------------------------------------------------------------


def _random_field(rng):
    return sum_of(product(affine(rng.uniform(-1, 1), rng.uniform(-1, 1, 2)),
                          affine(rng.uniform(-1, 1), rng.uniform(-1, 1, 2))),
                  bump(rng.uniform(0.5, 2), rng.uniform(0.2, 0.8, 2), rng.uniform(0.3, 0.8)))


def test_criterion_2_calculus_suite():
    with criterion(2) as checks:
        t0 = time.perf_counter()
        rng = np.random.default_rng(7)
        tol, n = 1e-4, 24

        # positive homogeneity, each side against the difference quotient
        err_h = 0.0
        for i in range(n):
            fn = LIBRARY[i % len(LIBRARY)]
            x = fn.kinks[0] if (fn.kinks and i % 2 == 0) else float(rng.uniform(-3, 3))
            v, alpha = float(rng.uniform(-2, 2)), float(rng.uniform(0, 5))
            lhs = fn.semideriv(x, alpha * v)
            err_h = max(err_h, abs(lhs - alpha * fn.semideriv(x, v)),
                        abs(lhs - fd_one_sided(fn.value, x, alpha * v, FD_STEPS)))
        checks.append((err_h <= tol, f"homogeneity {n} inst err {err_h:.1e}"))

        err_l = 0.0
        for i in range(n):
            f1, f2 = LIBRARY[i % len(LIBRARY)], LIBRARY[(3 * i + 1) % len(LIBRARY)]
            a, b = rng.uniform(-3, 3, 2)
            kinks = f1.kinks + f2.kinks
            x = kinks[0] if (kinks and i % 2 == 0) else float(rng.uniform(-3, 3))
            v = float(rng.uniform(-2, 2))
            ref = fd_one_sided(linear_comb(f1, f2, a, b).value, x, v, FD_STEPS)
            err_l = max(err_l, abs(dh_linear_comb(f1, f2, a, b, x, v) - ref))
        checks.append((err_l <= tol, f"linear combination {n} inst err {err_l:.1e}"))

        err_c = 0.0
        outers = [LIBRARY[0], ABS, shifted_max(0.3), max_pair(-1.0, 2.0), SQUARE]
        for i in range(n):
            outer = outers[i % len(outers)]
            k = outer.kinks[0] if outer.kinks else 0.0
            x0 = float(rng.uniform(-1, 1))
            inner = centered_quadratic(float(rng.uniform(-1, 1)), float(rng.choice([-1, 1]) * rng.uniform(0.5, 2)),
                                       x0, k if i % 2 == 0 else k + 1.0)
            v = float(rng.uniform(-2, 2))
            ref = fd_one_sided(compose(outer, inner).value, x0, v, FD_STEPS)
            err_c = max(err_c, abs(dh_chain(outer, inner, x0, v) - ref))
        checks.append((err_c <= tol, f"chain rule {n} inst err {err_c:.1e}"))

        err_m = 0.0
        for _ in range(n):
            g = _random_field(rng)
            V = tuple(sum_of(affine(0.0, rng.uniform(-0.5, 0.5, 2)),
                             product(affine(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5, 2)),
                                     affine(0.0, rng.uniform(-0.5, 0.5, 2)))) for _ in range(2))
            err_m = max(err_m, verify_material_gradient_rule(g, V, rng.uniform(0, 1, (4, 2)), (1e-3, 1e-4)))
        checks.append((err_m <= tol, f"material gradient {n} inst err {err_m:.1e}"))
        runtime = time.perf_counter() - t0
        checks.append((runtime < 10, f"runtime {runtime:.1f} s < 10 s"))


# -- 3 -------------------------------------------------------------------------

VI_CASES = [
    (lambda: structured_square(8, interface_square=(2, 6)), BilinearCoeffs(), 20.0, lambda x: 0.03 + 0.0 * x[:, 0]),
    (lambda: structured_square(12), BilinearCoeffs(a=((1.5, 0.3), (0.3, 0.7))), 15.0,
     lambda x: 0.02 + 0.05 * x[:, 0]),
    (lambda: generate_disk_in_square(32, 16, 0.25), BilinearCoeffs(b=3.0), 10.0,
     lambda x: 0.04 + 0.02 * np.sin(3 * x[:, 1])),
    (lambda: generate_disk_in_square(24, 12, 0.3), BilinearCoeffs(a=((2.0, 0.0), (0.0, 1.0)), d=(0.5, -0.5), b=1.0),
     30.0, lambda x: 0.05 + 0.0 * x[:, 0]),
    (lambda: generate_disk_in_square(32, 16, 0.3), BilinearCoeffs(a=((0.8, -0.2), (-0.2, 1.2))), 25.0,
     lambda x: 0.03 + 0.04 * (x[:, 0] - 0.5) ** 2),
]


def test_criterion_3_vi_oracle():
    with criterion(3) as checks:
        t0 = time.perf_counter()
        worst_y, worst_comp, worst_c, n_active, max_nodes = 0.0, 0.0, 0.0, [], 0
        for make, coeffs, fval, phi_fn in VI_CASES:
            m = make()
            max_nodes = max(max_nodes, m.n_nodes)
            f, phi = np.full(m.n_nodes, fval), phi_fn(m.nodes)
            ref = oracle_small(m, coeffs, f, phi)
            sols = {c: solve_obstacle(m, coeffs, f, phi, c=c) for c in (1.0, 1e2, 1e4)}
            base = sols[1e2]
            n_active.append(int(base.active.sum()))
            worst_y = max(worst_y, float(np.max(np.abs(base.y - ref.y))))
            worst_comp = max(worst_comp, max(s.comp_residual for s in sols.values()))
            for s in sols.values():
                if not np.array_equal(s.active, base.active):
                    worst_c = np.inf
                worst_c = max(worst_c, float(np.max(np.abs(s.y - base.y))), float(np.max(np.abs(s.lam - base.lam))))
        runtime = time.perf_counter() - t0
        checks.append((max_nodes <= 200 and min(n_active) > 0,
                       f"5 meshes up to {max_nodes} nodes, active counts {n_active}"))
        checks.append((worst_y <= 1e-7, f"|y_pdas - y_oracle| {worst_y:.1e}"))
        checks.append((worst_comp <= 1e-8, f"complementarity {worst_comp:.1e}"))
        checks.append((worst_c <= 1e-8, f"c-invariance {worst_c:.1e}"))
        checks.append((runtime < 30, f"runtime {runtime:.1f} s < 30 s"))


# -- 4 -------------------------------------------------------------------------


def _adjoint_problems():
    built = build(parse_config(SHIPPED))
    mesh = built.mesh
    target = built.problem.target
    return mesh, [
        ("shipped", built.problem),
        ("general", ShapeProblem(BilinearCoeffs(a=((2.0, 0.3), (0.3, 1.0)), d=(0.5, -0.2), b=1.0),
                                 PiecewiseSource(100.0, 0.0), affine(1.5, (0.2, 0.4)), target)),
        ("analytic", ShapeProblem(BilinearCoeffs(b=0.5), AnalyticSource(bump(100.0, (0.5, 0.5), 0.25)),
                                  constant(2.0), target)),
    ]


def test_criterion_4_adjoint_residual():
    with criterion(4) as checks:
        mesh, problems = _adjoint_problems()
        for name, p in problems:
            t0 = time.perf_counter()
            ev = p.evaluate(mesh, gradient=False)
            s, v = ev.state, ev.adjoint.v
            ybar = p.target.value(mesh.nodes)
            r2 = adjoint_residual(mesh, p.coeffs, s.y, v, ybar, active_set_triangles(s, mesh), p.c)
            r3 = state_residual(mesh, p.coeffs, s.y, s.lam, p.source.load(mesh), s.phi, p.c)
            interior = ~mesh.outer_mask
            e2 = float(np.max(np.abs(r2[interior & ~s.active])))
            e3 = float(np.max(np.abs(r3[interior])))
            runtime = time.perf_counter() - t0
            checks.append((e2 <= 1e-9 and e3 <= 1e-9 and runtime < 10 and s.active.any(),
                           f"{name}: d2L {e2:.1e}, d3L {e3:.1e}, {int(s.active.sum())} active, {runtime:.1f} s"))


# -- 5 -------------------------------------------------------------------------


def test_criterion_5_shape_gradient_fd():
    with criterion(5) as checks:
        t0 = time.perf_counter()
        spec = parse_config(SHIPPED)
        variants = {
            "inactive": replace(spec, obstacle={"kind": "constant", "value": 1e6}),
            "active": spec,
        }
        for name, sp in variants.items():
            built = build(sp)
            mesh, p = built.mesh, built.problem
            ev = p.evaluate(mesh)
            dirs = admissible_directions(mesh, ev.state, np.random.default_rng(11), 6)
            slopes, rels = [], []
            for V in dirs:
                r = fd_check_shape_gradient(p, mesh, V, (1e-2, 1e-3, 1e-4), gradient=ev.gradient)
                slopes.append(r.slope)
                rels.append(r.relative_error)
            ok = (min(slopes) >= 0.9 and max(rels) <= 1e-2 and (name == "inactive") == (ev.n_active == 0))
            checks.append((ok, f"{name} ({mesh.n_nodes} nodes, {ev.n_active} active): min slope {min(slopes):.2f}, "
                               f"max rel err {max(rels):.1e}"))
        runtime = time.perf_counter() - t0
        checks.append((runtime < 300, f"runtime {runtime:.0f} s < 300 s"))


# -- 6 -------------------------------------------------------------------------


def test_criterion_6_laplacian_reduction():
    with criterion(6) as checks:
        t0 = time.perf_counter()
        built = build(parse_config(SHIPPED))
        mesh, p = built.mesh, built.problem
        assert p.coeffs.is_laplacian
        ev = p.evaluate(mesh)
        rng = np.random.default_rng(5)
        worst, scale = 0.0, 0.0
        for _ in range(20):
            V = random_smooth_direction(mesh, rng)
            a = directional_semiderivative(ev.gradient, V)
            b = laplacian_shape_pairing(mesh, ev.state, ev.adjoint, p.source, p.target, p.obstacle, p.nu, V)
            worst = max(worst, abs(a - b))
            scale = max(scale, abs(a))
        runtime = time.perf_counter() - t0
        checks.append((worst <= 1e-12, f"20 directions, max |diff| {worst:.1e} (pairings up to {scale:.1e})"))
        checks.append((runtime < 30, f"runtime {runtime:.1f} s < 30 s"))


# -- 7 -------------------------------------------------------------------------


def _boundary_flux(mesh, V):
    """Outer boundary integral of the P1 field V . n (trapezoid, exact on each edge)."""
    out = mesh.edges[mesh.edge_markers == Marker.OUTER]
    p, q = mesh.nodes[out[:, 0]], mesh.nodes[out[:, 1]]
    d = q - p
    n = np.column_stack([d[:, 1], -d[:, 0]])  # |n| = edge length
    mid = 0.5 * (p + q)
    n *= np.sign(np.sum(n * (mid - 0.5), axis=1))[:, None]  # outward on the unit square
    return float(np.sum(0.5 * np.sum((V[out[:, 0]] + V[out[:, 1]]) * n, axis=1)))


def test_criterion_7_volume_identity():
    with criterion(7) as checks:
        mesh = generate_disk_in_square(128, 64, 0.2)
        cov = volume_pairing_covector(mesh)
        rng = np.random.default_rng(3)
        x, y = mesh.nodes.T
        worst, worst_lin = 0.0, 0.0
        for k in range(10):
            deg = 1 if k < 3 else 3
            coef = rng.normal(size=(2, deg + 1, deg + 1))
            V = np.column_stack([sum(coef[c, i, j] * x**i * y**j for i in range(deg + 1) for j in range(deg + 1 - i))
                                 for c in range(2)])
            hook = float(np.sum(cov * V))
            worst = max(worst, abs(hook - _boundary_flux(mesh, V)))
            if deg == 1:
                exact = coef[0, 1, 0] + coef[1, 0, 1]  # div of a linear field on the unit square
                worst_lin = max(worst_lin, abs(hook - exact))
        checks.append((worst <= 1e-12, f"10 polynomial fields, |hook - flux| {worst:.1e}"))
        checks.append((worst_lin <= 1e-12, f"linear fields vs closed form {worst_lin:.1e}"))


# -- 8 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_8_identification():
    with criterion(8) as checks:
        t0 = time.perf_counter()
        spec = parse_config(SHIPPED)
        built = build(spec)
        r_star = spec.target["radius"]
        mesh, trace = optimize(built.problem, built.mesh, spec.optimizer)
        J, S = trace.objective, trace.stationarity
        reduction = 1 - J[-1] / J[0]
        ratio = S[-1] / S[0]
        radius = interface_mean_radius(mesh)
        runtime = time.perf_counter() - t0
        checks.append((reduction >= 0.95, f"J {J[0]:.3e} -> {J[-1]:.3e} ({100 * reduction:.2f}% reduction)"))
        checks.append((ratio <= 1e-3, f"stationarity ratio {ratio:.2e} after {len(J) - 1} iterations"))
        checks.append((abs(radius - r_star) <= 0.02, f"mean radius {radius:.4f} (target {r_star})"))
        checks.append((runtime < 900, f"runtime {runtime:.0f} s < 900 s"))
