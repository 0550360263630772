import numpy as np
import pytest

from mfglab.grid import Grid


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[1, 2, 3], ids=["1d", "2d", "3d"])
def small_grid(request):
    return Grid(request.param, 2.0, {1: 41, 2: 21, 3: 11}[request.param])
