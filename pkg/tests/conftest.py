import math

import numpy as np
import pytest

from snls.grid import field_from_function, make_grid

SQRT_PI = math.sqrt(math.pi)


@pytest.fixture
def grid1():
    return make_grid(1, 20.0, 512)


@pytest.fixture
def gauss1(grid1):
    return field_from_function(grid1, lambda x: np.exp(-x**2 / 2))


@pytest.fixture
def grid2():
    return make_grid(2, 10.0, 64)


@pytest.fixture
def gauss2(grid2):
    return field_from_function(grid2, lambda x, y: np.exp(-(x**2 + y**2) / 2))
