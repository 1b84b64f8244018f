import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from kperturb import perturb
from kperturb.grid import SpaceGrid, TimeGrid
from kperturb.stable import StableParams, stable_kernel

settings.register_profile("kp", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("kp")


@pytest.fixture(autouse=True)
def _fresh_memo():
    perturb.clear_cache()
    yield
    perturb.clear_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_sgrid():
    return SpaceGrid(1, 10.0, 128)


@pytest.fixture(scope="session")
def small_tgrid():
    return TimeGrid(0.0, 1.0, 8)


@pytest.fixture(scope="session")
def cauchy_kernel(small_tgrid, small_sgrid):
    """alpha = 1 stationary kernel on a small torus (exact lattice semigroup)."""
    return stable_kernel(StableParams(1.0, 1), small_tgrid, small_sgrid)
