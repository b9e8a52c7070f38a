import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from diqkd.numkernel import DensityOperator

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_density(rng, labels, dims, rank=None, trace=1.0):
    """Random positive operator with the given trace."""
    d = int(np.prod(dims))
    rank = rank or d
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    m = g @ g.conj().T
    return DensityOperator(trace * m / np.trace(m).real, tuple(labels), tuple(dims))


def random_unitary(rng, d):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


def werner(v):
    phi = np.array([1, 0, 0, 1]) / np.sqrt(2)
    return v * np.outer(phi, phi) + (1 - v) * np.eye(4) / 4


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
