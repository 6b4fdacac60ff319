"""Planar triangulations with a fixed outer boundary and a fitted interface.

The hold-all domain X is triangulated so that the interface polygon consists
of mesh edges; triangles carry a subdomain label (INT inside the interface,
OUT outside). Moving the mesh by ``x -> x + t V`` is the discrete
perturbation of identity. Meshes are immutable: :func:`deform` returns a new
one.

Plain-text mesh format (``read_mesh`` / ``write_mesh``)::

    shapevi-mesh 1
    nodes <N>
    <x> <y> <flag>            # N lines; flag 0=FIXED_OUTER 1=INTERFACE 2=FREE
    triangles <T>
    <i> <j> <k> <label>       # T lines, counterclockwise; label 0=OUT 1=INT
    edges <E>
    <i> <j> <marker>          # E lines; marker 0=OUTER 1=INTERFACE

Indices are zero based. Blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property

import numpy as np

from .errors import ElementInversion, GeometryInfeasible, MeshError, QualityCollapse

DEFAULT_QUALITY_FLOOR = 0.2


class Sub(IntEnum):
    OUT = 0
    INT = 1


class Flag(IntEnum):
    FIXED_OUTER = 0
    INTERFACE = 1
    FREE = 2


class Marker(IntEnum):
    OUTER = 0
    INTERFACE = 1


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def signed_areas(nodes, triangles):
    p = nodes[triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def triangle_quality(nodes, triangles):
    """``2 r / R`` per triangle (1 for equilateral, 0 for degenerate)."""
    p = nodes[triangles]
    a = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
    b = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
    c = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
    area = np.abs(signed_areas(nodes, triangles))
    s = 0.5 * (a + b + c)
    denom = s * a * b * c
    with np.errstate(divide="ignore", invalid="ignore"):
        q = np.where(denom > 0, 8.0 * area**2 / denom, 0.0)
    return q


@dataclass(frozen=True, eq=False)
class TriMesh:
    nodes: np.ndarray
    triangles: np.ndarray
    subdomain: np.ndarray
    edges: np.ndarray
    edge_markers: np.ndarray
    node_flags: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", _frozen(self.nodes, float).reshape(-1, 2))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64).reshape(-1, 3))
        object.__setattr__(self, "subdomain", _frozen(self.subdomain, np.int8))
        object.__setattr__(self, "edges", _frozen(self.edges, np.int64).reshape(-1, 2))
        object.__setattr__(self, "edge_markers", _frozen(self.edge_markers, np.int8))
        object.__setattr__(self, "node_flags", _frozen(self.node_flags, np.int8))
        if len(self.subdomain) != len(self.triangles):
            raise MeshError("one subdomain label per triangle required")
        if len(self.node_flags) != len(self.nodes):
            raise MeshError("one flag per node required")
        if len(self.edge_markers) != len(self.edges):
            raise MeshError("one marker per boundary edge required")
        if self.validate:
            self.check()

    # -- derived data -------------------------------------------------------

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @cached_property
    def areas(self):
        return signed_areas(self.nodes, self.triangles)

    @cached_property
    def hat_gradients(self):
        """``(T, 3, 2)`` gradients of the three P1 hat functions per triangle."""
        p = self.nodes[self.triangles]
        x, y = p[:, :, 0], p[:, :, 1]
        two_a = 2.0 * self.areas
        g = np.empty((self.n_triangles, 3, 2))
        g[:, 0, 0] = y[:, 1] - y[:, 2]
        g[:, 1, 0] = y[:, 2] - y[:, 0]
        g[:, 2, 0] = y[:, 0] - y[:, 1]
        g[:, 0, 1] = x[:, 2] - x[:, 1]
        g[:, 1, 1] = x[:, 0] - x[:, 2]
        g[:, 2, 1] = x[:, 1] - x[:, 0]
        return g / two_a[:, None, None]

    @cached_property
    def outer_mask(self):
        return self.node_flags == Flag.FIXED_OUTER

    @cached_property
    def interface_mask(self):
        return self.node_flags == Flag.INTERFACE

    @cached_property
    def interface_edges(self):
        return self.edges[self.edge_markers == Marker.INTERFACE]

    def quality(self):
        return mesh_quality(self)

    def centroids(self):
        return self.nodes[self.triangles].mean(axis=1)

    def with_nodes(self, nodes) -> "TriMesh":
        return TriMesh(
            nodes, self.triangles, self.subdomain, self.edges, self.edge_markers, self.node_flags, validate=False
        )

    # -- invariants ---------------------------------------------------------

    def check(self):
        if self.n_triangles and np.min(self.areas) <= 0:
            raise ElementInversion("triangle with non-positive signed area")
        iface = self.interface_edges
        if len(iface) == 0:
            return
        owners = _edge_owners(self.triangles)
        for i, j in iface:
            key = (min(i, j), max(i, j))
            tris = owners.get(key, [])
            if len(tris) != 2:
                raise MeshError(f"interface edge {key} is not an interior mesh edge")
            labels = sorted(int(self.subdomain[t]) for t in tris)
            if labels != [Sub.OUT, Sub.INT]:
                raise MeshError(f"interface edge {key} does not separate INT from OUT")
        deg = np.bincount(iface.ravel(), minlength=self.n_nodes)
        if np.any(deg[deg > 0] != 2):
            raise MeshError("interface edges do not form closed polygons")


def _edge_owners(triangles):
    owners = {}
    for t, tri in enumerate(triangles):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            i, j = int(tri[a]), int(tri[b])
            owners.setdefault((min(i, j), max(i, j)), []).append(t)
    return owners


# -- generation ---------------------------------------------------------------


def generate_disk_in_square(n_boundary=32, n_interface=16, radius=0.25, center=(0.5, 0.5), max_area=None,
                            min_angle=30.0) -> TriMesh:
    """Unit-square hold-all with a polygonal circle as interface.

    ``n_boundary`` nodes are spread uniformly over the square's perimeter
    (must be a multiple of 4 so the corners are nodes), ``n_interface`` over
    the circle. Interior nodes come from a quality Delaunay refinement that
    never splits either polygon. ``max_area`` defaults to the area of an
    equilateral triangle with side equal to the coarser of the two spacings;
    the finer one gives slivers at the vertices of the coarser polygon,
    which cannot be split.
    """
    import triangle

    cx, cy = map(float, center)
    r = float(radius)
    if n_boundary < 8 or n_interface < 8:
        raise ValueError("n_boundary and n_interface must be at least 8")
    if n_boundary % 4:
        raise ValueError("n_boundary must be a multiple of 4")
    gap = min(cx - r, 1.0 - cx - r, cy - r, 1.0 - cy - r)
    if r <= 0 or gap <= 0:
        raise GeometryInfeasible(f"circle (center {center}, radius {radius}) not strictly inside the unit square")

    per_side = n_boundary // 4
    s = np.arange(per_side) / per_side
    square = np.concatenate([
        np.column_stack([s, np.zeros(per_side)]),
        np.column_stack([np.ones(per_side), s]),
        np.column_stack([1.0 - s, np.ones(per_side)]),
        np.column_stack([np.zeros(per_side), 1.0 - s]),
    ])
    theta = 2.0 * np.pi * np.arange(n_interface) / n_interface
    circle = np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])
    vertices = np.vstack([square, circle])
    nb = n_boundary
    seg_outer = np.column_stack([np.arange(nb), (np.arange(nb) + 1) % nb])
    seg_iface = nb + np.column_stack([np.arange(n_interface), (np.arange(n_interface) + 1) % n_interface])
    segments = np.vstack([seg_outer, seg_iface])

    if max_area is None:
        h = max(1.0 / per_side, 2.0 * r * np.sin(np.pi / n_interface))
        max_area = np.sqrt(3.0) / 4.0 * h * h
    outside_pt = [0.5 * (cx - r), cy]
    pslg = {
        "vertices": vertices,
        "segments": segments,
        "regions": [[cx, cy, Sub.INT, 0], [outside_pt[0], outside_pt[1], Sub.OUT, 0]],
    }
    out = triangle.triangulate(pslg, f"pq{min_angle:g}a{max_area:.12g}AYYQ")
    nodes = out["vertices"]
    tris = out["triangles"]
    labels = out["triangle_attributes"][:, 0].round().astype(np.int8)
    if nodes.shape[0] < vertices.shape[0] or not np.allclose(nodes[: vertices.shape[0]], vertices):
        raise MeshError("triangulator reordered the input vertices")
    areas = signed_areas(nodes, tris)
    tris = np.where((areas < 0)[:, None], tris[:, [0, 2, 1]], tris)

    flags = np.full(nodes.shape[0], Flag.FREE, dtype=np.int8)
    flags[:nb] = Flag.FIXED_OUTER
    flags[nb:nb + n_interface] = Flag.INTERFACE
    edges = np.vstack([seg_outer, seg_iface])
    markers = np.concatenate([np.full(nb, Marker.OUTER), np.full(n_interface, Marker.INTERFACE)])
    return TriMesh(nodes, tris, labels, edges, markers, flags)


def unit_square_two_triangles() -> TriMesh:
    """The 4-node, 2-triangle unit square used throughout the tests."""
    nodes = [[0, 0], [1, 0], [1, 1], [0, 1]]
    tris = [[0, 1, 2], [0, 2, 3]]
    edges = [[0, 1], [1, 2], [2, 3], [3, 0]]
    return TriMesh(nodes, tris, [Sub.OUT, Sub.OUT], edges, [Marker.OUTER] * 4, [Flag.FIXED_OUTER] * 4)


def structured_square(n: int, interface_square=None) -> TriMesh:
    """``n x n`` cells on the unit square, each split along its diagonal.

    ``interface_square`` given as ``(i0, i1)`` grid indices marks the cells in
    ``[i0, i1)^2`` as INT and their boundary as the interface.
    """
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: j * (n + 1) + i  # noqa: E731
    tris, labels = [], []
    for j in range(n):
        for i in range(n):
            inside = interface_square is not None and all(interface_square[0] <= k < interface_square[1] for k in (i, j))
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            tris += [[a, b, c], [a, c, d]]
            labels += [Sub.INT if inside else Sub.OUT] * 2
    flags = np.full(len(nodes), Flag.FREE, dtype=np.int8)
    on_bnd = (np.isclose(nodes[:, 0], 0) | np.isclose(nodes[:, 0], 1) | np.isclose(nodes[:, 1], 0)
              | np.isclose(nodes[:, 1], 1))
    flags[on_bnd] = Flag.FIXED_OUTER
    edges, markers = [], []
    for k in range(n):
        edges += [[idx(k, 0), idx(k + 1, 0)], [idx(n, k), idx(n, k + 1)], [idx(k + 1, n), idx(k, n)],
                  [idx(0, k + 1), idx(0, k)]]
        markers += [Marker.OUTER] * 4
    if interface_square is not None:
        i0, i1 = interface_square
        for k in range(i0, i1):
            edges += [[idx(k, i0), idx(k + 1, i0)], [idx(i1, k), idx(i1, k + 1)], [idx(k + 1, i1), idx(k, i1)],
                      [idx(i0, k + 1), idx(i0, k)]]
            markers += [Marker.INTERFACE] * 4
        for e in edges[-4 * (i1 - i0):]:
            flags[e] = Flag.INTERFACE
    return TriMesh(nodes, tris, labels, edges, markers, flags)


# -- deformation and geometric functionals -------------------------------------


@dataclass(frozen=True)
class Deformation:
    V: np.ndarray
    t: float = 1.0


def deform(mesh: TriMesh, d: Deformation, quality_floor: float | None = DEFAULT_QUALITY_FLOOR) -> TriMesh:
    """Move every node by ``t * V``. Connectivity and labels are kept.

    Raises :class:`ElementInversion` if a triangle loses positive area and
    :class:`QualityCollapse` if the minimum quality drops below
    ``quality_floor`` (``None`` disables the quality guard).
    """
    V = np.asarray(d.V, dtype=float)
    if V.shape != mesh.nodes.shape:
        raise ValueError(f"deformation field has shape {V.shape}, expected {mesh.nodes.shape}")
    if np.any(V[mesh.outer_mask] != 0.0):
        raise MeshError("deformation moves fixed outer nodes")
    t = float(d.t)
    if t == 0.0:
        return mesh
    new_nodes = mesh.nodes + t * V
    areas = signed_areas(new_nodes, mesh.triangles)
    if np.min(areas) <= 0:
        raise ElementInversion(f"{int(np.sum(areas <= 0))} triangles inverted at t={t:g}")
    new = mesh.with_nodes(new_nodes)
    if quality_floor is not None:
        q = mesh_quality(new)
        if q < quality_floor:
            raise QualityCollapse(f"mesh quality {q:.3g} below floor {quality_floor:g} at t={t:g}")
    return new


def interface_length(mesh: TriMesh) -> float:
    e = mesh.interface_edges
    if len(e) == 0:
        return 0.0
    d = mesh.nodes[e[:, 1]] - mesh.nodes[e[:, 0]]
    return float(np.sum(np.linalg.norm(d, axis=1)))


def perimeter_gradient(mesh: TriMesh) -> np.ndarray:
    """Gradient of the polygonal interface length w.r.t. node positions."""
    g = np.zeros_like(mesh.nodes)
    e = mesh.interface_edges
    if len(e) == 0:
        return g
    d = mesh.nodes[e[:, 1]] - mesh.nodes[e[:, 0]]
    u = d / np.linalg.norm(d, axis=1)[:, None]
    np.add.at(g, e[:, 1], u)
    np.add.at(g, e[:, 0], -u)
    return g


def mesh_quality(mesh: TriMesh) -> float:
    if mesh.n_triangles == 0:
        return 1.0
    return float(np.min(triangle_quality(mesh.nodes, mesh.triangles)))


def interface_mean_radius(mesh: TriMesh, center=None) -> float:
    """Mean distance of interface nodes from ``center`` (default: their centroid)."""
    pts = mesh.nodes[mesh.interface_mask]
    c = pts.mean(axis=0) if center is None else np.asarray(center, dtype=float)
    return float(np.mean(np.linalg.norm(pts - c, axis=1)))


# -- text I/O -------------------------------------------------------------------


def write_mesh(mesh: TriMesh, path) -> None:
    lines = ["shapevi-mesh 1", f"nodes {mesh.n_nodes}"]
    lines += [f"{x!r} {y!r} {int(f)}" for (x, y), f in zip(mesh.nodes.tolist(), mesh.node_flags)]
    lines.append(f"triangles {mesh.n_triangles}")
    lines += [f"{i} {j} {k} {int(s)}" for (i, j, k), s in zip(mesh.triangles.tolist(), mesh.subdomain)]
    lines.append(f"edges {len(mesh.edges)}")
    lines += [f"{i} {j} {int(m)}" for (i, j), m in zip(mesh.edges.tolist(), mesh.edge_markers)]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    with open(path) as fh:
        rows = [ln.split("#", 1)[0].split() for ln in fh]
    rows = [r for r in rows if r]
    if not rows or rows[0][0] != "shapevi-mesh":
        raise MeshError(f"{path}: not a shapevi mesh file")
    pos = 1

    def section(name, width):
        nonlocal pos
        if rows[pos][0] != name:
            raise MeshError(f"{path}: expected section {name!r}, got {rows[pos][0]!r}")
        n = int(rows[pos][1])
        block = rows[pos + 1: pos + 1 + n]
        if len(block) != n or any(len(r) != width for r in block):
            raise MeshError(f"{path}: malformed {name} section")
        pos += n + 1
        return block

    nodes = section("nodes", 3)
    tris = section("triangles", 4)
    edges = section("edges", 3)
    return TriMesh(
        nodes=[[float(r[0]), float(r[1])] for r in nodes],
        triangles=[[int(v) for v in r[:3]] for r in tris],
        subdomain=[int(r[3]) for r in tris],
        edges=[[int(r[0]), int(r[1])] for r in edges],
        edge_markers=[int(r[2]) for r in edges],
        node_flags=[int(r[2]) for r in nodes],
    )
