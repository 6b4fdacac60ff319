"""YAML problem description and the builder that turns it into solver objects.

Schema (every key optional unless noted; unknown keys are errors)::

    geometry:            # disk in the unit square, or a mesh file
      kind: disk         # disk | mesh
      n_boundary: 80     # divisible by 4
      n_interface: 40
      radius: 0.2
      center: [0.5, 0.5]
      max_area: null     # triangle area bound, default from the interface spacing
      path: null         # required for kind: mesh
    coefficients: {a: [[1, 0], [0, 1]], d: [0, 0], b: 0}
    obstacle: {kind: constant, value: 2.0}        # catalog field (required)
    target:                                       # catalog field or
      kind: self_generated                        # state on a second disk geometry
      radius: 0.3
    source: {kind: piecewise, f_int: 100, f_out: 0}   # or {kind: analytic, field: {...}}
    c: 100
    nu: 1.0e-4
    solver: {tol: 1.0e-10, max_iter: 100, adjoint_mode: limit, active_term: nodal}
    optimizer: {...}                              # fields of OptConfig
    fd_check: {t_steps: [1.0e-2, 1.0e-3, 1.0e-4], n_directions: 5, n_modes: 3, scale: 0.1, cutoff_width: 0.1}

Catalog field kinds: ``constant {value}``, ``affine {value, gradient}``,
``bump {amplitude, center, width}``, ``product {factors}``, ``sum {terms}``.
"""

from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, fields

import yaml

from .adjoint_shape import AdjointMode
from .errors import ConfigError, InvalidCoefficients
from .fem import BilinearCoeffs
from .fields import InterpolatedField, constant, from_spec
from .mesh import TriMesh, generate_disk_in_square, read_mesh
from .optimizer import OptConfig
from .problem import ShapeProblem
from .sources import AnalyticSource, PiecewiseSource


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads exponent floats without a dot (``1e-4``)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"^[-+]?(?:[0-9][0-9_]*)(?:\.[0-9_]*)?[eE][-+]?[0-9]+$"),
    list("-+0123456789"),
)


def _tuplify(x):
    if isinstance(x, (list, tuple)):
        return tuple(_tuplify(v) for v in x)
    if isinstance(x, dict):
        return {k: _tuplify(v) for k, v in x.items()}
    return x


def _listify(x):
    if isinstance(x, tuple):
        return [_listify(v) for v in x]
    if isinstance(x, dict):
        return {k: _listify(v) for k, v in x.items()}
    return x


@dataclass(frozen=True)
class GeometrySpec:
    kind: str = "disk"
    n_boundary: int = 80
    n_interface: int = 40
    radius: float = 0.2
    center: tuple = (0.5, 0.5)
    max_area: float | None = None
    path: str | None = None


@dataclass(frozen=True)
class SolverSpec:
    tol: float = 1e-10
    max_iter: int = 100
    adjoint_mode: str = "limit"
    active_term: str = "nodal"


@dataclass(frozen=True)
class FDSpec:
    t_steps: tuple = (1e-2, 1e-3, 1e-4)
    n_directions: int = 5
    n_modes: int = 3
    scale: float = 0.1
    cutoff_width: float = 0.1


@dataclass(frozen=True)
class ProblemSpec:
    obstacle: dict
    target: dict
    source: dict
    geometry: GeometrySpec = field(default_factory=GeometrySpec)
    coefficients: BilinearCoeffs = field(default_factory=BilinearCoeffs)
    c: float = 100.0
    nu: float = 1e-4
    solver: SolverSpec = field(default_factory=SolverSpec)
    optimizer: OptConfig = field(default_factory=OptConfig)
    fd_check: FDSpec = field(default_factory=FDSpec)


def _section(cls, data, path):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {unknown}")
    try:
        return cls(**data)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _check_source(src, path="source"):
    if not isinstance(src, dict) or "kind" not in src:
        raise ConfigError(f"{path}: expected a mapping with a 'kind' key")
    if src["kind"] == "piecewise":
        extra = set(src) - {"kind", "f_int", "f_out"}
        if extra:
            raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
        for k in ("f_int", "f_out"):
            if not isinstance(src.get(k), (int, float)) or not math.isfinite(src[k]):
                raise ConfigError(f"{path}.{k}: expected a finite number")
    elif src["kind"] == "analytic":
        extra = set(src) - {"kind", "field"}
        if extra:
            raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
        from_spec(src.get("field"), f"{path}.field")
    else:
        raise ConfigError(f"{path}.kind: expected 'piecewise' or 'analytic', got {src['kind']!r}")


_TARGET_GEOMETRY = {"n_boundary", "n_interface", "radius", "center", "max_area"}


def _check_target(tgt, path="target"):
    if isinstance(tgt, dict) and tgt.get("kind") == "self_generated":
        extra = set(tgt) - _TARGET_GEOMETRY - {"kind"}
        if extra:
            raise ConfigError(f"{path}: unknown keys {sorted(extra)}")
    else:
        from_spec(tgt, path)


def config_from_dict(raw: dict) -> ProblemSpec:
    """Validate a parsed mapping; every failure names the offending field."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a mapping")
    names = {f.name for f in fields(ProblemSpec)}
    unknown = sorted(set(raw) - names)
    if unknown:
        raise ConfigError(f"config: unknown keys {unknown}")
    for req in ("obstacle", "target", "source"):
        if req not in raw:
            raise ConfigError(f"config: missing required key {req!r}")
    raw = _tuplify(raw)

    c = raw.get("c", 100.0)
    if not isinstance(c, (int, float)) or isinstance(c, bool):
        raise ConfigError(f"c: expected a number, got {c!r}")
    if not c > 0:
        raise ConfigError(f"c: c must be positive (got {c!r})")
    nu = raw.get("nu", 1e-4)
    if not isinstance(nu, (int, float)) or isinstance(nu, bool):
        raise ConfigError(f"nu: expected a number, got {nu!r}")
    if not nu >= 0:
        raise ConfigError(f"nu: must be nonnegative (got {nu!r})")

    geometry = _section(GeometrySpec, raw.get("geometry"), "geometry")
    if geometry.kind not in ("disk", "mesh"):
        raise ConfigError(f"geometry.kind: expected 'disk' or 'mesh', got {geometry.kind!r}")
    if geometry.kind == "mesh" and not geometry.path:
        raise ConfigError("geometry.path: required for kind 'mesh'")
    try:
        coeffs = _section(BilinearCoeffs, raw.get("coefficients"), "coefficients")
    except InvalidCoefficients as exc:
        raise ConfigError(f"coefficients: {exc}") from exc
    solver = _section(SolverSpec, raw.get("solver"), "solver")
    try:
        AdjointMode(solver.adjoint_mode)
    except ValueError:
        raise ConfigError(f"solver.adjoint_mode: expected 'paper-exact' or 'limit', got {solver.adjoint_mode!r}")
    if solver.active_term not in ("nodal", "triangles"):
        raise ConfigError(f"solver.active_term: expected 'nodal' or 'triangles', got {solver.active_term!r}")
    optimizer = _section(OptConfig, raw.get("optimizer"), "optimizer")
    fd = _section(FDSpec, raw.get("fd_check"), "fd_check")

    from_spec(raw["obstacle"], "obstacle")
    _check_target(raw["target"])
    _check_source(raw["source"])
    return ProblemSpec(obstacle=raw["obstacle"], target=raw["target"], source=raw["source"], geometry=geometry,
                       coefficients=coeffs, c=float(c), nu=float(nu), solver=solver, optimizer=optimizer,
                       fd_check=fd)


def load_yaml(text: str):
    try:
        return yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: not valid YAML ({exc})") from exc


def parse_config_text(text: str) -> ProblemSpec:
    return config_from_dict(load_yaml(text))


def parse_config(path) -> ProblemSpec:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    return parse_config_text(text)


def config_to_dict(spec: ProblemSpec) -> dict:
    out = {}
    for f in fields(ProblemSpec):
        v = getattr(spec, f.name)
        out[f.name] = asdict(v) if hasattr(v, "__dataclass_fields__") else v
    return _listify(out)


def dump_config(spec: ProblemSpec) -> str:
    return yaml.safe_dump(config_to_dict(spec), sort_keys=False)


# -- builders ------------------------------------------------------------------


def build_mesh(geometry: GeometrySpec, radius: float | None = None) -> TriMesh:
    if geometry.kind == "mesh":
        return read_mesh(geometry.path)
    return generate_disk_in_square(geometry.n_boundary, geometry.n_interface,
                                   geometry.radius if radius is None else radius, geometry.center,
                                   max_area=geometry.max_area)


def build_source(spec: dict):
    if spec["kind"] == "piecewise":
        return PiecewiseSource(float(spec["f_int"]), float(spec["f_out"]))
    return AnalyticSource(from_spec(spec["field"], "source.field"))


@dataclass(frozen=True)
class Built:
    """Everything a command needs: the problem, its initial mesh and, for self-generated data, the target mesh."""

    problem: ShapeProblem
    mesh: TriMesh
    target_mesh: TriMesh | None = None


def build(spec: ProblemSpec, mode: str | None = None) -> Built:
    """Instantiate mesh and problem. ``mode`` overrides ``solver.adjoint_mode``."""
    mesh = build_mesh(spec.geometry)
    obstacle = from_spec(spec.obstacle, "obstacle")
    source = build_source(spec.source)
    adjoint_mode = AdjointMode(mode or spec.solver.adjoint_mode)
    common = dict(coeffs=spec.coefficients, source=source, obstacle=obstacle, c=spec.c, nu=spec.nu,
                  tol=spec.solver.tol, max_iter=spec.solver.max_iter, adjoint_mode=adjoint_mode,
                  active_term=spec.solver.active_term)
    target_mesh = None
    if spec.target.get("kind") == "self_generated":
        g = spec.geometry
        if g.kind != "disk":
            raise ConfigError("target: self_generated needs a disk geometry")
        tg = {k: spec.target.get(k, getattr(g, k)) for k in _TARGET_GEOMETRY}
        target_mesh = generate_disk_in_square(tg["n_boundary"], tg["n_interface"], tg["radius"], tg["center"],
                                              max_area=tg["max_area"])
        y_star = ShapeProblem(target=constant(0.0), **common).state(target_mesh).y
        target = InterpolatedField(target_mesh.nodes, target_mesh.triangles, y_star).as_field(spec.target)
    else:
        target = from_spec(spec.target, "target")
    return Built(ShapeProblem(target=target, **common), mesh, target_mesh)
