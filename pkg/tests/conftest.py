import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pdml.corrsim import make_tap_grid, noise_covariance

settings.register_profile(
    "suite",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def grid11():
    return make_tap_grid(11)


@pytest.fixture(scope="session")
def cov11(grid11):
    return noise_covariance(grid11)


@pytest.fixture(scope="session")
def grid5():
    return make_tap_grid(5)
