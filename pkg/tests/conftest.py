import numpy as np
import pytest

from inheritlab.carleman import RadialGrid
from inheritlab.geometry import conformal_metric, flat_metric, get_metric


@pytest.fixture
def rng():
    return np.random.default_rng(20171221)


@pytest.fixture(scope="session")
def flat():
    return flat_metric()


@pytest.fixture(scope="session")
def conformal():
    return conformal_metric(m=1.0)


@pytest.fixture(scope="session", params=["flat3", "conformal", "power"])
def af_metric(request):
    return get_metric(request.param)


@pytest.fixture
def small_grid():
    return RadialGrid(x1=0.5, n=127, length=32.0)


@pytest.fixture
def outer_points(rng):
    """Points with 2 <= |x| <= 50 in random directions."""
    directions = rng.normal(size=(40, 3))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return rng.uniform(2.0, 50.0, size=(40, 1)) * directions
