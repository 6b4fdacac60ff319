"""One-sided (Hadamard) semiderivatives of scalar maps and their calculus rules.

A :class:`SemiDiffFn` bundles a function with its semiderivative
``(x, v) -> d_H f(x)[v]``. The rules (linear combination, chain rule) are
exposed as plain functions, and :func:`fd_one_sided` is the independent
difference-quotient oracle every closed form is checked against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import FDConvergenceError, ShapeVIError
from .fields import AnalyticField2D


@dataclass(frozen=True)
class SemiDiffFn:
    value: Callable[[float], float]
    semideriv: Callable[[float, float], float]
    name: str = "f"
    # locations where the map is not differentiable; used only for sampling
    kinks: tuple = ()


def _check(*xs):
    for x in xs:
        if math.isnan(x):
            raise ValueError("NaN input")


def dh_max(x: float, v: float) -> float:
    """Semiderivative of ``max(0, .)`` at ``x`` in direction ``v``."""
    _check(x, v)
    if x > 0:
        return float(v)
    if x < 0:
        return 0.0
    return max(0.0, float(v))


def dh_chain(outer: SemiDiffFn, inner: SemiDiffFn, x: float, v: float) -> float:
    return outer.semideriv(inner.value(x), inner.semideriv(x, v))


def dh_linear_comb(f1: SemiDiffFn, f2: SemiDiffFn, alpha: float, beta: float, x: float, v: float) -> float:
    return alpha * f1.semideriv(x, v) + beta * f2.semideriv(x, v)


def compose(outer: SemiDiffFn, inner: SemiDiffFn) -> SemiDiffFn:
    return SemiDiffFn(
        value=lambda x: outer.value(inner.value(x)),
        semideriv=lambda x, v: dh_chain(outer, inner, x, v),
        name=f"{outer.name}({inner.name})",
    )


def linear_comb(f1: SemiDiffFn, f2: SemiDiffFn, alpha: float, beta: float) -> SemiDiffFn:
    return SemiDiffFn(
        value=lambda x: alpha * f1.value(x) + beta * f2.value(x),
        semideriv=lambda x, v: dh_linear_comb(f1, f2, alpha, beta, x, v),
        name=f"{alpha}*{f1.name}+{beta}*{f2.name}",
    )


# -- library -----------------------------------------------------------------

def max0(impl=dh_max) -> SemiDiffFn:
    return SemiDiffFn(lambda x: max(0.0, x), impl, "max0", (0.0,))


MAX0 = max0()
IDENTITY = SemiDiffFn(lambda x: x, lambda x, v: v, "id")
SQUARE = SemiDiffFn(lambda x: x * x, lambda x, v: 2.0 * x * v, "sq")
ABS = SemiDiffFn(abs, lambda x, v: (v if x > 0 else -v) if x != 0 else abs(v), "abs", (0.0,))


def affine1d(a: float, b: float) -> SemiDiffFn:
    return SemiDiffFn(lambda x: a * x + b, lambda x, v: a * v, f"({a}x+{b})")


def quadratic1d(a: float, b: float, c: float) -> SemiDiffFn:
    return SemiDiffFn(lambda x: (a * x + b) * x + c, lambda x, v: (2.0 * a * x + b) * v, f"({a}x2+{b}x+{c})")


def centered_quadratic(a: float, b: float, x0: float, k: float) -> SemiDiffFn:
    """``x -> a (x - x0)^2 + b (x - x0) + k``, exactly ``k`` at ``x0``."""
    return SemiDiffFn(
        lambda x: (a * (x - x0) + b) * (x - x0) + k,
        lambda x, v: (2.0 * a * (x - x0) + b) * v,
        f"q[{a},{b},{x0},{k}]",
    )


def shifted_max(s: float) -> SemiDiffFn:
    """``x -> max(0, x - s)``."""
    return SemiDiffFn(lambda x: max(0.0, x - s), lambda x, v: dh_max(x - s, v), f"max0(x-{s})", (s,))


def max_pair(p: float, q: float) -> SemiDiffFn:
    """``x -> max(p x, q x)``; kink at 0 with one-sided slopes."""
    return SemiDiffFn(
        lambda x: max(p * x, q * x),
        lambda x, v: (p * v if p * x > q * x else q * v) if x != 0 else max(p * v, q * v),
        f"max({p}x,{q}x)",
        (0.0,),
    )


LIBRARY = (MAX0, IDENTITY, SQUARE, ABS, affine1d(2.0, -1.0), shifted_max(0.5), max_pair(-1.0, 3.0))


def fd_one_sided(f, x: float, v: float, steps: Sequence[float], tol: float | None = None) -> float:
    """Extrapolated one-sided difference quotient of ``t -> f(x + t v)`` at ``0+``.

    ``steps`` must be positive and strictly decreasing. Successive quotients
    are combined pairwise by Richardson extrapolation (first-order error
    model). If ``tol`` is given and the last two extrapolants (or, for two
    steps, the two raw quotients) differ by more than ``tol``, raises
    :class:`FDConvergenceError`.
    """
    steps = [float(t) for t in steps]
    if not steps or any(t <= 0 for t in steps) or any(a <= b for a, b in zip(steps, steps[1:])):
        raise ValueError("steps must be positive and strictly decreasing")
    f0 = f(x)
    q = [(f(x + t * v) - f0) / t for t in steps]
    if len(q) == 1:
        return q[0]
    rich = []
    for (t1, q1), (t2, q2) in zip(zip(steps, q), zip(steps[1:], q[1:])):
        r = t1 / t2
        rich.append((r * q2 - q1) / (r - 1.0))
    if tol is not None:
        a, b = (rich[-2], rich[-1]) if len(rich) > 1 else (q[-2], q[-1])
        if abs(a - b) > tol:
            raise FDConvergenceError(f"difference quotients not converged: {a!r} vs {b!r}")
    return rich[-1]


# -- material derivative of a gradient ---------------------------------------


class NotInvertible(ShapeVIError):
    pass


def _inverse_map(w, t, V1: AnalyticField2D, V2: AnalyticField2D, iters=50):
    """Solve ``xi + t V(xi) = w`` pointwise by Newton's method."""
    w = np.atleast_2d(w)
    xi = w - t * np.column_stack([V1.value(w), V2.value(w)])
    for _ in range(iters):
        res = xi + t * np.column_stack([V1.value(xi), V2.value(xi)]) - w
        if np.max(np.abs(res)) < 1e-15:
            return xi
        jac = np.eye(2)[None] + t * np.stack([V1.gradient(xi), V2.gradient(xi)], axis=1)
        det = np.linalg.det(jac)
        if np.any(np.abs(det) < 1e-12):
            raise NotInvertible("id + tV is singular near a sample point")
        xi = xi - np.linalg.solve(jac, res[:, :, None])[:, :, 0]
    res = xi + t * np.column_stack([V1.value(xi), V2.value(xi)]) - w
    if np.max(np.abs(res)) > 1e-12:
        raise NotInvertible("Newton iteration for the inverse map did not converge")
    return xi


def verify_material_gradient_rule(g: AnalyticField2D, V, sample_points, t_steps, eps: float = 1e-5) -> float:
    """Max discrepancy in ``D_m(grad g) = grad(D_m g) - (DV)^T grad g``.

    Uses the transported family ``g_t = g o F_t^{-1}`` with ``F_t = id + tV``,
    whose material derivative vanishes. The left side is a one-sided
    difference quotient in ``t`` of ``grad(g_t)(F_t(x))``, with the spatial
    gradient taken by central differences of ``g o F_t^{-1}`` (inverse map by
    Newton). The right side is ``-(DV)^T grad g`` in closed form.
    """
    V1, V2 = V
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    lhs = np.zeros_like(pts)

    def transported_gradient(t):
        z = pts + t * np.column_stack([V1.value(pts), V2.value(pts)]) if t else pts.copy()
        out = np.zeros_like(pts)
        for i in range(2):
            e = np.zeros(2)
            e[i] = eps
            gp = g.value(_inverse_map(z + e, t, V1, V2)) if t else g.value(z + e)
            gm = g.value(_inverse_map(z - e, t, V1, V2)) if t else g.value(z - e)
            out[:, i] = (gp - gm) / (2 * eps)
        return out

    cache = {0.0: transported_gradient(0.0)}
    for t in t_steps:
        cache[float(t)] = transported_gradient(float(t))
    for k in range(pts.shape[0]):
        for i in range(2):
            lhs[k, i] = fd_one_sided(lambda t: cache[float(t)][k, i], 0.0, 1.0, t_steps)

    grad_g = g.gradient(pts)
    jac = np.stack([V1.gradient(pts), V2.gradient(pts)], axis=1)  # jac[:, l, i] = d_i V_l
    rhs = -np.einsum("nli,nl->ni", jac, grad_g)
    return float(np.max(np.abs(lhs - rhs))) if pts.size else 0.0


# -- property suite ----------------------------------------------------------


@dataclass
class CheckResult:
    name: str
    passed: bool
    instances: int
    max_error: float
    detail: str = ""

    def __post_init__(self):
        self.max_error = float(self.max_error)
        self.passed = bool(self.passed)


def _sample_away_from_kinks(rng, fn: SemiDiffFn, n, margin=0.1, lo=-5.0, hi=5.0):
    xs = []
    for k in fn.kinks:
        xs.append(float(k))
    while len(xs) < n:
        x = float(rng.uniform(lo, hi))
        if all(abs(x - k) >= margin for k in fn.kinks):
            xs.append(x)
    return xs


FD_STEPS = (1e-2, 1e-3, 1e-4)


def check_max_table(impl=dh_max, n=1000, seed=0) -> CheckResult:
    """Branch selection and values of ``d_H max(0, .)`` against the defining quotient."""
    rng = np.random.default_rng(seed)
    xs = list(rng.uniform(-5, 5, n))
    vs = list(rng.uniform(-5, 5, n))
    # explicit branch boundaries
    xs += [0.0, 0.0, 0.0, 2.0, -1.0, 1e-300, -1e-300]
    vs += [-2.0, 3.0, 0.0, -3.0, 7.5, -1.0, 1.0]
    worst, bad = 0.0, []
    for x, v in zip(xs, vs):
        got = impl(x, v)
        if x > 0:
            expected = v
        elif x < 0:
            expected = 0.0
        else:
            expected = max(0.0, v)
        # defining quotient along h(t) = x + t v with t small enough to stay on x's side
        t = 2.0 ** -60 if x == 0 else 2.0 ** math.floor(math.log2(abs(x) / (4 * max(abs(v), 1.0))))
        quotient = (max(0.0, x + t * v) - max(0.0, x)) / t
        err = abs(got - quotient)
        worst = max(worst, err)
        if got != expected or err > 1e-14 * max(1.0, abs(v)):
            bad.append((x, v, got, expected))
    return CheckResult("max_table", not bad, len(xs), worst, f"failures: {bad[:3]}" if bad else "")


def check_homogeneity(impl=dh_max, n=250, seed=1) -> CheckResult:
    rng = np.random.default_rng(seed)
    fns = [f if f.name != "max0" else max0(impl) for f in LIBRARY]
    worst, count, ok = 0.0, 0, True
    for fn in fns:
        for x in _sample_away_from_kinks(rng, fn, n // len(fns) + 1):
            v = float(rng.uniform(-5, 5))
            base = fn.semideriv(x, v)
            for alpha in (0.0, 0.5, 2.0, 10.0):
                err = abs(fn.semideriv(x, alpha * v) - alpha * base)
                worst = max(worst, err)
                ok &= err <= 1e-14 * max(1.0, abs(alpha * base))
                count += 1
    return CheckResult("homogeneity", ok, count, worst)


def check_fd_consistency(impl=dh_max, n=1000, seed=2, tol=1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    fns = [f if f.name != "max0" else max0(impl) for f in LIBRARY]
    worst, count = 0.0, 0
    per = n // len(fns) + 1
    for fn in fns:
        for x in _sample_away_from_kinks(rng, fn, per):
            v = float(rng.uniform(-5, 5))
            err = abs(fn.semideriv(x, v) - fd_one_sided(fn.value, x, v, FD_STEPS))
            worst = max(worst, err)
            count += 1
    return CheckResult("fd_consistency", worst <= tol, count, worst)


def _random_inner(rng, at_kink=None):
    a, b = float(rng.uniform(-1, 1)), float(rng.choice([-1, 1]) * rng.uniform(0.5, 2.0))
    x0 = float(rng.uniform(-2, 2))
    k = at_kink if at_kink is not None else float(rng.uniform(-3, 3))
    return centered_quadratic(a, b, x0, k), x0


def check_linear_combination(impl=dh_max, n=40, seed=3, tol=1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    fns = [f if f.name != "max0" else max0(impl) for f in LIBRARY]
    worst = 0.0
    for i in range(n):
        f1, f2 = fns[rng.integers(len(fns))], fns[rng.integers(len(fns))]
        alpha, beta = float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3))
        kinks = f1.kinks + f2.kinks
        x = kinks[0] if (kinks and i % 4 == 0) else None
        while x is None:
            cand = float(rng.uniform(-5, 5))
            if all(abs(cand - k) >= 0.1 for k in kinks):
                x = cand
        v = float(rng.uniform(-5, 5))
        got = dh_linear_comb(f1, f2, alpha, beta, x, v)
        ref = fd_one_sided(linear_comb(f1, f2, alpha, beta).value, x, v, FD_STEPS)
        worst = max(worst, abs(got - ref))
    return CheckResult("linear_combination", worst <= tol, n, worst)


def check_chain_rule(impl=dh_max, n=40, seed=4, tol=1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    outers = [max0(impl), ABS, shifted_max(0.5), max_pair(-1.0, 3.0)]
    worst = 0.0
    for i in range(n):
        outer = outers[i % len(outers)]
        if i % 2 == 0:
            # inner value lands exactly on the outer kink
            inner, x = _random_inner(rng, at_kink=outer.kinks[0])
        else:
            inner, _ = _random_inner(rng)
            x = None
            while x is None:
                cand = float(rng.uniform(-3, 3))
                if abs(inner.value(cand) - outer.kinks[0]) >= 0.5:
                    x = cand
        v = float(rng.uniform(-3, 3))
        got = dh_chain(outer, inner, x, v)
        ref = fd_one_sided(compose(outer, inner).value, x, v, FD_STEPS)
        worst = max(worst, abs(got - ref))
    return CheckResult("chain_rule", worst <= tol, n, worst)


def _random_scalar_field(rng):
    from . import fields

    kind = rng.integers(3)
    if kind == 0:
        a = fields.affine(rng.uniform(-1, 1), rng.uniform(-1, 1, 2))
        b = fields.affine(rng.uniform(-1, 1), rng.uniform(-1, 1, 2))
        return fields.product(a, b)
    if kind == 1:
        return fields.bump(rng.uniform(0.5, 2), rng.uniform(0.2, 0.8, 2), rng.uniform(0.3, 0.8))
    return fields.sum_of(
        fields.product(*(fields.affine(rng.uniform(-1, 1), rng.uniform(-1, 1, 2)) for _ in range(3))),
        fields.bump(rng.uniform(-1, 1), rng.uniform(0, 1, 2), 0.5),
    )


def check_material_gradient_rule(n=20, seed=5, tol=1e-4, t_steps=(1e-3, 1e-4)) -> CheckResult:
    from . import fields

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        g = _random_scalar_field(rng)
        V = tuple(
            fields.sum_of(
                fields.affine(0.0, rng.uniform(-0.5, 0.5, 2)),
                fields.product(
                    fields.affine(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5, 2)),
                    fields.affine(0.0, rng.uniform(-0.5, 0.5, 2)),
                ),
            )
            for _ in range(2)
        )
        pts = rng.uniform(0, 1, (8, 2))
        worst = max(worst, verify_material_gradient_rule(g, V, pts, t_steps))
    return CheckResult("material_gradient_rule", worst <= tol, n, worst)


def run_calculus_suite(max_impl=dh_max, seed=0) -> list[CheckResult]:
    """Everything verify-calculus reports, deterministic for a given seed."""
    return [
        check_max_table(max_impl, seed=seed),
        check_homogeneity(max_impl, seed=seed + 1),
        check_fd_consistency(max_impl, seed=seed + 2),
        check_linear_combination(max_impl, seed=seed + 3),
        check_chain_rule(max_impl, seed=seed + 4),
        check_material_gradient_rule(seed=seed + 5),
    ]
