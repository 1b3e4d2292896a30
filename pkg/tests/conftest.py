import numpy as np
import pytest

from drkf.freq import InfiniteConfig, solve_infinite
from drkf.sslib import FrequencyGrid, scalar_model, solve_dare, tracking_model


@pytest.fixture(scope="session")
def tracking():
    return tracking_model()


@pytest.fixture(scope="session")
def scalar1():
    return scalar_model()


@pytest.fixture(scope="session")
def stable_scalar():
    return scalar_model(0.5)


@pytest.fixture(scope="session")
def tracking_inf512(tracking):
    return solve_infinite(tracking, 1.0, 512, InfiniteConfig(tol=1e-6))


@pytest.fixture(scope="session")
def stable_inf512(stable_scalar):
    return solve_infinite(stable_scalar, 1.0, 512, InfiniteConfig(tol=1e-6))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def off_pole_nodes(N, model, margin=1e-3):
    """Grid nodes away from unit-circle eigenvalues of A."""
    z = FrequencyGrid(N).nodes
    eig = np.linalg.eigvals(model.A)
    keep = np.all(np.abs(z[:, None] - eig[None, :]) > margin, axis=1)
    return z[keep]
