import numpy as np
import pytest

from crbrate.model import SystemConfig, generate_rayleigh_channels


@pytest.fixture
def cfg():
    return SystemConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hermitian(rng, n, psd=False):
    m = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return m @ m.conj().T if psd else (m + m.conj().T) / 2


def random_channels(users, seed, n_tx=4):
    return generate_rayleigh_channels(users, n_tx, seed)
