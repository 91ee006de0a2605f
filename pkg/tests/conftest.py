import numpy as np
import pytest

from orbitshells.model import random_coefficients


@pytest.fixture
def small_coeffs():
    return random_coefficients(7, 5, 3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
