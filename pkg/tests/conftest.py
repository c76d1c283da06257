import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def crand(rng):
    """Standard complex Gaussian array factory."""

    def make(*shape):
        return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

    return make
