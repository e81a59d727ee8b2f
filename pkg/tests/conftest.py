import os
import sys

import numpy as np
import pytest

_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
for path in (os.path.join(_root, "scripts"), _root):
    if path not in sys.path:
        sys.path.insert(0, path)

from grid_core import Field, GridSpec, random_field  # noqa: E402
from jet_lagrangian import standard_coefficients  # noqa: E402


@pytest.fixture(scope="session")
def grid64():
    return GridSpec(64)


@pytest.fixture(scope="session")
def grid256():
    return GridSpec(256)


@pytest.fixture(scope="session")
def grid():
    return GridSpec(512)


@pytest.fixture(scope="session")
def coefficients(grid):
    return standard_coefficients(grid)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def phi(grid):
    return random_field(grid, 7, 4, 0.5, 0.5)


@pytest.fixture
def sin_field(grid):
    return Field.from_function(grid, np.sin)


@pytest.fixture(scope="session")
def grid2048():
    return GridSpec(2048)
