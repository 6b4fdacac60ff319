import numpy as np
import pytest

from shapevi.adjoint_shape import (
    PARTS,
    AdjointMode,
    adjoint_residual,
    assemble_shape_gradient,
    directional_semiderivative,
    divergence_covector,
    fd_check_shape_gradient,
    laplacian_shape_pairing,
    solve_adjoint,
    state_residual,
    volume_pairing_covector,
)
from shapevi.errors import AdjointIndefinite
from shapevi.fem import BilinearCoeffs
from shapevi.fields import bump, constant
from shapevi.mesh import generate_disk_in_square, structured_square
from shapevi.problem import ShapeProblem, admissible_directions, random_smooth_direction
from shapevi.sources import AnalyticSource, PiecewiseSource
from shapevi.vi_solver import active_set_triangles


@pytest.fixture(scope="module")
def mesh():
    return generate_disk_in_square(64, 32, 0.25)


def test_limit_adjoint_residual(mesh, general_problem):
    ev = general_problem.evaluate(mesh, gradient=False)
    s, v = ev.state, ev.adjoint.v
    assert s.active.any()
    ybar = general_problem.target.value(mesh.nodes)
    r = adjoint_residual(mesh, general_problem.coeffs, s.y, v, ybar, active_set_triangles(s, mesh), general_problem.c)
    inactive = ~mesh.outer_mask & ~s.active
    assert np.max(np.abs(r[inactive])) <= 1e-9
    assert np.all(v[s.active] == 0) and np.all(v[mesh.outer_mask] == 0)
    rs = state_residual(mesh, general_problem.coeffs, s.y, s.lam, general_problem.source.load(mesh), s.phi,
                        general_problem.c)
    assert np.max(np.abs(rs[~mesh.outer_mask])) <= 1e-9


def test_paper_exact_adjoint(mesh, active_problem):
    s = active_problem.state(mesh)
    ybar = active_problem.target.value(mesh.nodes)
    with pytest.raises(AdjointIndefinite) as info:
        solve_adjoint(mesh, active_problem.coeffs, s, ybar, c=1e4, mode=AdjointMode.PAPER_EXACT)
    assert info.value.min_eigenvalue < 0
    adj = solve_adjoint(mesh, active_problem.coeffs, s, ybar, c=1.0, mode="paper-exact")
    assert adj.min_eigenvalue > 0
    r = adjoint_residual(mesh, active_problem.coeffs, s.y, adj.v, ybar, active_set_triangles(s, mesh), 1.0)
    assert np.max(np.abs(r[~mesh.outer_mask])) <= 1e-9


def test_paper_exact_without_contact_equals_limit(mesh, smooth_target):
    p = ShapeProblem(BilinearCoeffs(), PiecewiseSource(10.0, 1.0), constant(1e6), smooth_target)
    s = p.state(mesh)
    ybar = smooth_target.value(mesh.nodes)
    a = solve_adjoint(mesh, p.coeffs, s, ybar, mode="limit")
    b = solve_adjoint(mesh, p.coeffs, s, ybar, mode="paper-exact")
    np.testing.assert_allclose(a.v, b.v, atol=1e-14)


def test_lagrangian_equals_objective(mesh, general_problem):
    ev = general_problem.evaluate(mesh, gradient=False)
    assert ev.lagrangian == pytest.approx(ev.objective, rel=1e-12)


def test_gradient_structure(mesh, general_problem):
    ev = general_problem.evaluate(mesh)
    g = ev.gradient
    assert set(g.parts) == set(PARTS)
    np.testing.assert_allclose(sum(g.parts.values()), g.g, atol=1e-15)
    assert np.all(g.g[mesh.outer_mask] == 0)
    assert np.any(g.parts["active_set"])
    assert not np.any(g.parts["source_transport"])


def test_corrupted_part_doubles(mesh, active_problem):
    a = active_problem.evaluate(mesh).gradient
    b = active_problem.evaluate(mesh, corrupt="bilinear_correction").gradient
    np.testing.assert_allclose(b.g - a.g, a.parts["bilinear_correction"], atol=1e-15)
    with pytest.raises(ValueError):
        active_problem.evaluate(mesh, corrupt="nope")


@pytest.mark.parametrize("which", ["inactive", "active", "general", "analytic"])
def test_fd_check(mesh, smooth_target, active_problem, general_problem, which):
    problems = {
        "inactive": ShapeProblem(BilinearCoeffs(), PiecewiseSource(100.0, 0.0), constant(1e6), smooth_target),
        "active": active_problem,
        "general": general_problem,
        "analytic": ShapeProblem(BilinearCoeffs(b=0.5), AnalyticSource(bump(100.0, (0.5, 0.5), 0.25)), constant(2.0),
                                 smooth_target),
    }
    p = problems[which]
    ev = p.evaluate(mesh)
    V = admissible_directions(mesh, ev.state, np.random.default_rng(7), 1)[0]
    r = fd_check_shape_gradient(p, mesh, V, gradient=ev.gradient)
    assert r.slope >= 0.9
    assert r.relative_error <= 1e-2


def test_fd_check_flags_corrupted_gradient(mesh, active_problem):
    ev = active_problem.evaluate(mesh, corrupt="divergence")
    V = admissible_directions(mesh, ev.state, np.random.default_rng(7), 1)[0]
    r = fd_check_shape_gradient(active_problem, mesh, V, gradient=ev.gradient)
    assert r.relative_error > 1e-2


def test_laplacian_pairing_agrees(mesh, active_problem, rng):
    ev = active_problem.evaluate(mesh)
    for _ in range(5):
        V = random_smooth_direction(mesh, rng)
        hand = laplacian_shape_pairing(mesh, ev.state, ev.adjoint, active_problem.source, active_problem.target,
                                       active_problem.obstacle, active_problem.nu, V)
        assert hand == pytest.approx(directional_semiderivative(ev.gradient, V), rel=1e-11, abs=1e-14)


def test_volume_hook_and_divergence():
    m = structured_square(6)
    V = np.column_stack([m.nodes[:, 0] ** 2, m.nodes[:, 0] * m.nodes[:, 1]])
    # int div V = int (2x + x) over the unit square
    assert np.sum(volume_pairing_covector(m) * V) == pytest.approx(1.5, abs=1e-2)
    assert np.sum(divergence_covector(m, m.areas) * m.nodes) == pytest.approx(2.0, abs=1e-13)


def test_direction_shape_checked(mesh, active_problem):
    g = active_problem.evaluate(mesh).gradient
    with pytest.raises(ValueError):
        directional_semiderivative(g, np.zeros((3, 2)))


def test_gradient_active_term_variants(mesh, active_problem):
    ev = active_problem.evaluate(mesh)
    tri = assemble_shape_gradient(mesh, active_problem.coeffs, ev.state, ev.adjoint, active_problem.source,
                                  active_problem.target, active_problem.obstacle, active_problem.nu,
                                  active_term="triangles")
    np.testing.assert_array_equal(tri.parts["divergence"], ev.gradient.parts["divergence"])
    # constant obstacle: no transport of the obstacle in either variant
    assert not np.any(tri.parts["active_set"]) and not np.any(ev.gradient.parts["active_set"])
    with pytest.raises(ValueError):
        assemble_shape_gradient(mesh, active_problem.coeffs, ev.state, ev.adjoint, active_problem.source,
                                active_problem.target, active_problem.obstacle, 0.0, active_term="bogus")


@pytest.mark.parametrize("part", ["source_transport", "active_set"])
def test_fd_check_sees_data_dependent_parts(mesh, smooth_target, general_problem, part):
    # these parts vanish for constant data, so use a smooth source and a tilted obstacle
    p = ShapeProblem(general_problem.coeffs, AnalyticSource(bump(100.0, (0.5, 0.5), 0.25)), general_problem.obstacle,
                     smooth_target)
    ev = p.evaluate(mesh, corrupt=part)
    assert ev.n_active > 0
    V = admissible_directions(mesh, ev.state, np.random.default_rng(7), 1)[0]
    good = fd_check_shape_gradient(p, mesh, V, gradient=p.evaluate(mesh).gradient)
    bad = fd_check_shape_gradient(p, mesh, V, gradient=ev.gradient)
    assert good.relative_error <= 1e-2
    assert bad.relative_error > 10 * good.relative_error
