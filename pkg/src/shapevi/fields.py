"""Analytic scalar fields on the plane with exact gradients.

Data entering the shape derivative (target, obstacle, analytic sources) must
carry exact gradients, so fields are built from a small catalog instead of a
general expression parser:

    constant   value
    affine     value + gradient . x
    bump       amplitude * exp(-|x - center|^2 / width^2)
    product    factors: [field, field, ...]
    sum        terms: [field, field, ...]

Every field evaluates vectorised on an ``(n, 2)`` array of points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigError

Evaluator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AnalyticField2D:
    value: Evaluator
    gradient: Evaluator
    hessian: Optional[Evaluator] = None
    spec: Optional[dict] = field(default=None, compare=False)

    def __call__(self, x):
        return self.value(np.atleast_2d(x))


def _pts(x):
    return np.atleast_2d(np.asarray(x, dtype=float))


def constant(value: float) -> AnalyticField2D:
    value = float(value)
    return AnalyticField2D(
        value=lambda x: np.full(_pts(x).shape[0], value),
        gradient=lambda x: np.zeros((_pts(x).shape[0], 2)),
        hessian=lambda x: np.zeros((_pts(x).shape[0], 2, 2)),
        spec={"kind": "constant", "value": value},
    )


def affine(value: float, gradient) -> AnalyticField2D:
    c0 = float(value)
    g = np.asarray(gradient, dtype=float).reshape(2)
    return AnalyticField2D(
        value=lambda x: c0 + _pts(x) @ g,
        gradient=lambda x: np.tile(g, (_pts(x).shape[0], 1)),
        hessian=lambda x: np.zeros((_pts(x).shape[0], 2, 2)),
        spec={"kind": "affine", "value": c0, "gradient": g.tolist()},
    )


def bump(amplitude: float, center, width: float) -> AnalyticField2D:
    """Gaussian bump ``amplitude * exp(-|x - center|^2 / width^2)``."""
    amp = float(amplitude)
    c = np.asarray(center, dtype=float).reshape(2)
    w2 = float(width) ** 2
    if w2 <= 0:
        raise ConfigError("bump width must be positive")

    def val(x):
        d = _pts(x) - c
        return amp * np.exp(-np.sum(d * d, axis=1) / w2)

    def grad(x):
        d = _pts(x) - c
        return (-2.0 / w2) * val(x)[:, None] * d

    def hess(x):
        d = _pts(x) - c
        u = val(x)
        eye = np.eye(2)[None]
        return u[:, None, None] * ((4.0 / w2**2) * d[:, :, None] * d[:, None, :] - (2.0 / w2) * eye)

    return AnalyticField2D(
        val, grad, hess, spec={"kind": "bump", "amplitude": amp, "center": c.tolist(), "width": float(width)}
    )


def product(*factors: AnalyticField2D) -> AnalyticField2D:
    if not factors:
        raise ConfigError("product needs at least one factor")

    def val(x):
        out = np.ones(_pts(x).shape[0])
        for f in factors:
            out = out * f.value(x)
        return out

    def grad(x):
        vals = [f.value(x) for f in factors]
        grads = [f.gradient(x) for f in factors]
        out = np.zeros((_pts(x).shape[0], 2))
        for k, gk in enumerate(grads):
            others = np.ones_like(vals[0])
            for j, vj in enumerate(vals):
                if j != k:
                    others = others * vj
            out += others[:, None] * gk
        return out

    hess = None
    if all(f.hessian is not None for f in factors):

        def hess(x):
            vals = [f.value(x) for f in factors]
            grads = [f.gradient(x) for f in factors]
            hs = [f.hessian(x) for f in factors]
            n = len(factors)
            out = np.zeros((_pts(x).shape[0], 2, 2))
            for k in range(n):
                others = np.prod([vals[j] for j in range(n) if j != k], axis=0) if n > 1 else 1.0
                out += np.asarray(others)[..., None, None] * hs[k]
                for m in range(n):
                    if m == k:
                        continue
                    rest = [vals[j] for j in range(n) if j not in (k, m)]
                    r = np.prod(rest, axis=0) if rest else 1.0
                    out += np.asarray(r)[..., None, None] * grads[k][:, :, None] * grads[m][:, None, :]
            return out

    return AnalyticField2D(val, grad, hess, spec={"kind": "product", "factors": [f.spec for f in factors]})


def sum_of(*terms: AnalyticField2D) -> AnalyticField2D:
    if not terms:
        raise ConfigError("sum needs at least one term")
    hess = None
    if all(t.hessian is not None for t in terms):
        hess = lambda x: sum(t.hessian(x) for t in terms)  # noqa: E731
    return AnalyticField2D(
        value=lambda x: sum(t.value(x) for t in terms),
        gradient=lambda x: sum(t.gradient(x) for t in terms),
        hessian=hess,
        spec={"kind": "sum", "terms": [t.spec for t in terms]},
    )


_KEYS = {
    "constant": {"value"},
    "affine": {"value", "gradient"},
    "bump": {"amplitude", "center", "width"},
    "product": {"factors"},
    "sum": {"terms"},
}


def from_spec(spec: dict, path: str = "field") -> AnalyticField2D:
    """Build a catalog field from its dictionary description."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{path}: expected a mapping with a 'kind' key")
    kind = spec["kind"]
    if kind not in _KEYS:
        raise ConfigError(f"{path}.kind: unknown field kind {kind!r}")
    extra = set(spec) - _KEYS[kind] - {"kind"}
    missing = _KEYS[kind] - set(spec)
    if extra:
        raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    if missing:
        raise ConfigError(f"{path}: missing keys {sorted(missing)}")
    try:
        if kind == "constant":
            return constant(spec["value"])
        if kind == "affine":
            return affine(spec["value"], spec["gradient"])
        if kind == "bump":
            return bump(spec["amplitude"], spec["center"], spec["width"])
        if kind == "product":
            return product(*[from_spec(s, f"{path}.factors[{i}]") for i, s in enumerate(spec["factors"])])
        return sum_of(*[from_spec(s, f"{path}.terms[{i}]") for i, s in enumerate(spec["terms"])])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc


class InterpolatedField:
    """Field given by nodal values on another mesh, evaluated at arbitrary points.

    ``kind='linear'`` is the P1 interpolant, whose gradient jumps across the
    source edges. ``kind='cubic'`` is the C1 reduced Hsieh-Clough-Tocher
    interpolant through the same values, so point values are differentiable
    along any path; self-generated targets use it.
    """

    def __init__(self, nodes, triangles, values, kind="cubic"):
        import matplotlib.tri as mtri

        self._tri = mtri.Triangulation(nodes[:, 0], nodes[:, 1], triangles)
        values = np.asarray(values, dtype=float)
        if kind == "linear":
            self._interp = mtri.LinearTriInterpolator(self._tri, values)
        elif kind == "cubic":
            self._interp = mtri.CubicTriInterpolator(self._tri, values, kind="geom")
        else:
            raise ValueError(f"unknown interpolation kind {kind!r}")
        self._nodes = np.asarray(nodes, dtype=float)
        self._values = values

    def _eval(self, x):
        x = _pts(x)
        val = np.ma.filled(self._interp(x[:, 0], x[:, 1]), np.nan)
        gx, gy = self._interp.gradient(x[:, 0], x[:, 1])
        grad = np.column_stack([np.ma.filled(gx, np.nan), np.ma.filled(gy, np.nan)])
        bad = ~np.isfinite(val)
        if np.any(bad):
            # points on the hull can miss the trifinder by rounding
            for k in np.flatnonzero(bad):
                nearest = np.argmin(np.sum((self._nodes - x[k]) ** 2, axis=1))
                val[k] = self._values[nearest]
                grad[k] = 0.0
        return val, grad

    def as_field(self, spec=None) -> AnalyticField2D:
        return AnalyticField2D(
            value=lambda x: self._eval(x)[0],
            gradient=lambda x: self._eval(x)[1],
            spec=spec,
        )
