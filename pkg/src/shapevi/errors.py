"""Exception hierarchy shared across the solver."""


class ShapeVIError(Exception):
    """Base class for all errors raised by shapevi."""


class GeometryInfeasible(ShapeVIError, ValueError):
    pass


class MeshError(ShapeVIError):
    pass


class ElementInversion(MeshError):
    pass


class QualityCollapse(MeshError):
    pass


class InvalidCoefficients(ShapeVIError, ValueError):
    pass


class SolverError(ShapeVIError):
    pass


class SingularSystem(SolverError):
    pass


class ConvergenceError(SolverError):
    pass


class InfeasibleObstacle(SolverError, ValueError):
    pass


class AdjointIndefinite(SolverError):
    def __init__(self, message, min_eigenvalue):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class LineSearchFailure(ShapeVIError):
    pass


class ConfigError(ShapeVIError, ValueError):
    pass


class FDConvergenceError(ShapeVIError):
    pass
