import numpy as np
import pytest

from netheat.coefficients import CoefficientSet, Constant
from netheat.fem import AssembledSystem, build_mesh
from netheat.graph import build_graph

TRIANGLE = [(1, 2), (2, 3), (3, 1)]
EDGE = [(1, 2)]


@pytest.fixture
def triangle():
    return build_graph(TRIANGLE)


@pytest.fixture
def single_edge():
    return build_graph(EDGE)


def unit_system(g, N, lumped=False):
    return AssembledSystem(build_mesh(g, N), CoefficientSet.uniform(g.m, Constant(1.0)), lumped=lumped)


def generic_initial(mesh):
    """Continuous non-symmetric data on a triangle: sin(pi x) + x, 1 + x, 2 - 2x."""
    return mesh.interpolate([lambda x: np.sin(np.pi * x) + x, lambda x: 1 + x, lambda x: 2 - 2 * x])


def smooth_initial(mesh):
    """Smooth data on the triangle viewed as a circle of length 3."""
    return mesh.interpolate([
        lambda x, j=j: 1 + np.cos(2 * np.pi * (j + x) / 3) + 0.3 * np.sin(4 * np.pi * (j + x) / 3) for j in range(3)
    ])
