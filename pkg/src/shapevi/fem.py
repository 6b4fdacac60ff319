"""P1 finite elements on :class:`~shapevi.mesh.TriMesh`.

The bilinear form is

    a(y, v) = int  sum_ij a_ij d_i y d_j v + sum_i d_i (d_i y v + y d_i v) + b y v

with constant coefficients. Gradient and convection terms are integrated
exactly; the reaction term uses the vertex rule (lumped). Nodal fields are
plain ``(N,)`` arrays of P1 coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidCoefficients, SingularSystem
from .mesh import TriMesh

_LOCAL_MASS = (np.ones((3, 3)) + np.eye(3)) / 12.0


@dataclass(frozen=True)
class BilinearCoeffs:
    a: tuple = ((1.0, 0.0), (0.0, 1.0))
    d: tuple = (0.0, 0.0)
    b: float = 0.0

    def __post_init__(self):
        A = np.asarray(self.a, dtype=float)
        d = np.asarray(self.d, dtype=float)
        if A.shape != (2, 2) or d.shape != (2,):
            raise InvalidCoefficients("a must be 2x2 and d of length 2")
        if not np.all(np.isfinite(A)) or not np.all(np.isfinite(d)) or not np.isfinite(self.b):
            raise InvalidCoefficients("coefficients must be finite")
        if not np.allclose(A, A.T, rtol=0, atol=1e-14):
            raise InvalidCoefficients("diffusion matrix a must be symmetric")
        if np.min(np.linalg.eigvalsh(A)) <= 0:
            raise InvalidCoefficients("diffusion matrix a must be positive definite")
        if self.b < 0:
            raise InvalidCoefficients("weak maximum principle condition violated: reaction coefficient b < 0")
        object.__setattr__(self, "a", tuple(map(tuple, A.tolist())))
        object.__setattr__(self, "d", tuple(d.tolist()))
        object.__setattr__(self, "b", float(self.b))

    @property
    def A(self):
        return np.asarray(self.a)

    @property
    def dvec(self):
        return np.asarray(self.d)

    @property
    def is_laplacian(self):
        return np.array_equal(self.A, np.eye(2)) and not np.any(self.dvec) and self.b == 0.0


def _scatter(mesh: TriMesh, local, n=None, mask=None):
    """Sum ``(T, 3, 3)`` element matrices into a CSR matrix."""
    tri = mesh.triangles
    if mask is not None:
        tri, local = tri[mask], local[mask]
    n = mesh.n_nodes if n is None else n
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def element_stiffness(mesh: TriMesh, coeffs: BilinearCoeffs):
    """``(T, 3, 3)`` local matrices with entry ``[k, l] = a(phi_l, phi_k)``."""
    G = mesh.hat_gradients
    area = mesh.areas
    AG = G @ coeffs.A  # AG[t, l] = A^T grad phi_l, A symmetric
    local = area[:, None, None] * np.einsum("tki,tli->tkl", G, AG)
    dg = G @ coeffs.dvec  # d . grad phi
    if np.any(coeffs.dvec):
        local += (area / 3.0)[:, None, None] * (dg[:, :, None] + dg[:, None, :])
    if coeffs.b:
        local += (coeffs.b * area / 3.0)[:, None, None] * np.eye(3)[None]
    return local


def assemble_bilinear(mesh: TriMesh, coeffs: BilinearCoeffs) -> sp.csr_matrix:
    return _scatter(mesh, element_stiffness(mesh, coeffs))


def assemble_mass(mesh: TriMesh) -> sp.csr_matrix:
    return _scatter(mesh, mesh.areas[:, None, None] * _LOCAL_MASS[None])


def assemble_mass_indicator(mesh: TriMesh, marked) -> sp.csr_matrix:
    """Consistent mass matrix restricted to the marked triangles.

    ``marked`` is a boolean mask over triangles or an iterable of indices.
    """
    mask = np.zeros(mesh.n_triangles, dtype=bool)
    marked = np.asarray(list(marked) if not isinstance(marked, np.ndarray) else marked)
    if marked.dtype == bool:
        mask[:] = marked
    elif marked.size:
        mask[marked.astype(int)] = True
    return _scatter(mesh, mesh.areas[:, None, None] * _LOCAL_MASS[None], mask=mask)


def lumped_mass(mesh: TriMesh) -> np.ndarray:
    """Nodal weights ``int phi_k dx``."""
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(mesh.areas / 3.0, 3), minlength=mesh.n_nodes)


def assemble_load(mesh: TriMesh, f) -> np.ndarray:
    """``int f_h phi_k dx`` for the P1 field with nodal values ``f``."""
    return assemble_mass(mesh) @ np.asarray(f, dtype=float)


def assemble_load_piecewise(mesh: TriMesh, per_triangle) -> np.ndarray:
    """``int f phi_k dx`` for an elementwise constant ``f``."""
    w = np.asarray(per_triangle, dtype=float) * mesh.areas / 3.0
    return np.bincount(mesh.triangles.ravel(), weights=np.repeat(w, 3), minlength=mesh.n_nodes)


def solve_constrained(A, rhs, fixed, values=None, rtol=1e-10) -> np.ndarray:
    """Solve ``A x = rhs`` on the free rows with ``x[fixed] = values``.

    Rows and columns of fixed unknowns are eliminated and their values moved
    to the right-hand side. Sparse LU first, conjugate gradients as fallback
    when the reduced matrix is symmetric.
    """
    A = sp.csr_matrix(A)
    n = A.shape[0]
    fixed = np.asarray(fixed, dtype=bool)
    free = ~fixed
    x = np.zeros(n)
    if values is not None:
        x[fixed] = np.asarray(values, dtype=float)[fixed] if np.size(values) == n else values
    if not np.any(free):
        return x
    Aff = A[free][:, free].tocsc()
    b = np.asarray(rhs, dtype=float)[free] - A[free][:, fixed] @ x[fixed]
    if not np.any(b):
        return x
    try:
        xf = spla.splu(Aff).solve(b)
    except RuntimeError as exc:
        if abs(Aff - Aff.T).max() > 1e-12 * abs(Aff).max():
            raise SingularSystem(f"sparse factorization failed: {exc}") from exc
        xf, info = spla.cg(Aff, b, rtol=1e-14, atol=1e-12, maxiter=10 * Aff.shape[0])
        if info != 0:
            raise SingularSystem(f"conjugate gradient fallback failed (info={info})") from exc
    if not np.all(np.isfinite(xf)):
        raise SingularSystem("non-finite solution: matrix singular")
    res = np.linalg.norm(Aff @ xf - b)
    if res > rtol * max(np.linalg.norm(b), 1.0):
        raise SingularSystem(f"constrained residual {res:.3e} exceeds tolerance")
    x[free] = xf
    return x


def solve_dirichlet(A, rhs, mesh: TriMesh) -> np.ndarray:
    """Homogeneous Dirichlet solve: exact zeros at the outer boundary nodes."""
    return solve_constrained(A, rhs, mesh.outer_mask)


def write_coo(A, path) -> None:
    """Dump a sparse matrix as ``row col value`` lines for debugging."""
    C = sp.coo_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"{C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v!r}\n")
