import numpy as np
import pytest

from shapevi.fem import BilinearCoeffs
from shapevi.fields import affine, bump, constant, sum_of
from shapevi.mesh import generate_disk_in_square, structured_square, unit_square_two_triangles
from shapevi.problem import ShapeProblem
from shapevi.sources import PiecewiseSource

# Filled by tests/test_acceptance.py; one (criterion, passed, detail) per check.
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num, passed, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {num}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def small_disk():
    return generate_disk_in_square(32, 16, 0.25)


@pytest.fixture(scope="session")
def disk():
    return generate_disk_in_square(80, 40, 0.2)


@pytest.fixture(scope="session")
def square8():
    return structured_square(8, interface_square=(2, 6))


@pytest.fixture(scope="session")
def two_triangles():
    return unit_square_two_triangles()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def smooth_target():
    return sum_of(constant(0.5), bump(0.5, (0.5, 0.5), 0.2))


@pytest.fixture(scope="session")
def active_problem(smooth_target):
    return ShapeProblem(BilinearCoeffs(), PiecewiseSource(100.0, 0.0), constant(2.0), smooth_target, nu=1e-4)


@pytest.fixture(scope="session")
def general_problem(smooth_target):
    coeffs = BilinearCoeffs(a=((2.0, 0.3), (0.3, 1.0)), d=(0.5, -0.2), b=1.0)
    return ShapeProblem(coeffs, PiecewiseSource(100.0, 0.0), affine(1.5, (0.2, 0.4)), smooth_target, nu=1e-4)
