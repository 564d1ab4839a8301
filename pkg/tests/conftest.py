import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bfstab import build_gains, examples

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def rod():
    """Heated rod with lam_bar = 30 and three unstable modes."""
    return examples.heat_rod(lam_bar=30.0, n=200, rho=40.0)


@pytest.fixture(scope="session")
def rod_gains(rod):
    return build_gains(rod.basis, rod.parameters(margin=5.0))


@pytest.fixture(scope="session")
def square():
    """The 2D example with the twelve-mode catalog (mu = 17)."""
    return examples.heat_2d(mu=17.0, n=40, rho=1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
