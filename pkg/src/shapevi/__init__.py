"""Shape optimization constrained by an obstacle problem, on P1 triangular meshes.

Main entry points:

* :func:`shapevi.mesh.generate_disk_in_square` and :func:`shapevi.mesh.deform`
* :func:`shapevi.vi_solver.solve_obstacle` (primal-dual active set)
* :class:`shapevi.problem.ShapeProblem` for state, adjoint and shape gradient
* :func:`shapevi.optimizer.optimize`
* :func:`shapevi.config.parse_config` and the ``shapevi`` command
"""

from .adjoint_shape import AdjointMode, assemble_shape_gradient, fd_check_shape_gradient, solve_adjoint
from .errors import ShapeVIError
from .fem import BilinearCoeffs
from .mesh import TriMesh, deform, generate_disk_in_square
from .optimizer import OptConfig, optimize
from .problem import ShapeProblem
from .vi_solver import solve_obstacle

__version__ = "0.1.0"

__all__ = [
    "AdjointMode",
    "BilinearCoeffs",
    "OptConfig",
    "ShapeProblem",
    "ShapeVIError",
    "TriMesh",
    "assemble_shape_gradient",
    "deform",
    "fd_check_shape_gradient",
    "generate_disk_in_square",
    "optimize",
    "solve_adjoint",
    "solve_obstacle",
]
