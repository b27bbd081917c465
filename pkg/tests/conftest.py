"""Pytest configuration and fixtures."""
import numpy as np
import pytest

from src.core.assembly import CoefficientField, DofMap
from src.core.mesh import OUTER, GeometrySpec, Mesh, generate_mesh
from src.core.sparse_solver import SolverConfig


@pytest.fixture
def unit_square():
    """Two counterclockwise triangles covering [0, 1]^2, split along the main diagonal."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elements = np.array([[0, 1, 2], [0, 2, 3]])
    return Mesh(vertices, elements, [OUTER, OUTER], [True] * 4, np.empty((0, 2)))


@pytest.fixture(scope="session")
def geometry():
    """The standard square (-1, 1)^2 with an interface of radius 0.5."""
    return GeometrySpec(1.0, 0.5)


@pytest.fixture(scope="session")
def mesh8(geometry):
    return generate_mesh(geometry, 8)


@pytest.fixture(scope="session")
def mesh16(geometry):
    return generate_mesh(geometry, 16)


@pytest.fixture
def dofs8(mesh8):
    return DofMap.from_mesh(mesh8)


@pytest.fixture
def coefficients():
    """Strongly contrasting coefficients, sigma jumps by 10 and eps by 1/10."""
    return CoefficientField(sigma1=1.0, sigma2=10.0, eps1=1.0, eps2=0.1)


@pytest.fixture
def solver_config():
    return SolverConfig(tol=1e-12)


@pytest.fixture
def sample_config():
    """Provide a small run configuration for testing."""
    return {
        "geometry": {"half_width": 1.0, "interface_radius": 0.5},
        "mesh": {"n": 8},
        "coefficients": {"sigma1": 1.0, "sigma2": 10.0, "eps1": 1.0, "eps2": 0.1},
        "time": {"final_time": 0.25, "steps": 4},
        "pulse": {"kind": "trapezoidal", "amplitude": 1.0, "onset": 0.0,
                  "duration": 0.25, "rise_time": 0.0625},
        "initial": {"datum": "zero"},
        "output": {"stride": 2, "probes": [[0.0, 0.0], [0.75, 0.0]]},
    }
