import numpy as np
import pytest

from krigamg.problems import generate_fd_square, generate_fem_circle


@pytest.fixture(scope="session")
def laplace_5x5():
    return generate_fd_square(5, (1.0, 1.0, 0.0))


@pytest.fixture(scope="session")
def laplace_7x7():
    return generate_fd_square(7, (1.0, 1.0, 0.0))


@pytest.fixture(scope="session")
def aniso_7x7():
    return generate_fd_square(7, (1.0, 1e-2, 0.0))


@pytest.fixture(scope="session")
def circle_small():
    return generate_fem_circle(5, (1.0, 1.0, 0.0))


def random_spd(rng, q, jitter=0.5):
    """Random well-conditioned SPD matrix of size q."""
    m = rng.standard_normal((q, q))
    return m @ m.T + (q * jitter) * np.eye(q)
