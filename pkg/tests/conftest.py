import numpy as np
import pytest

from bubble_lab.curvature import CurvatureField
from bubble_lab.grid import build_grid


@pytest.fixture(scope="session")
def unit_field():
    """K = 1, kappa = 1 (offset ratio 1)."""
    return CurvatureField([[1.0]], 1.0)


@pytest.fixture(scope="session")
def cos_field():
    """K = 1, kappa = 2 + cos(theta): extrema at 0 (max) and pi (min)."""
    return CurvatureField([[1.0]], 2.0, kappa_cos=np.array([1.0]))


@pytest.fixture(scope="session")
def grid_small():
    return build_grid(64, 48)


@pytest.fixture(scope="session")
def grid_base():
    return build_grid(128, 64)


@pytest.fixture(scope="session")
def grid_scan():
    return build_grid(128, 48)
