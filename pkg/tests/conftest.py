import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_weights(rng, n, zero_prob=0.0):
    """Random complex weight vector, optionally with exact-zero entries."""
    w = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if zero_prob > 0.0:
        w[rng.random(n) < zero_prob] = 0.0
    norm = np.linalg.norm(w)
    if norm > 1.0:
        w = w / norm * rng.uniform(0.3, 1.0)
    return w


def random_positions(rng, n, half_width=0.2):
    return np.sort(rng.uniform(-half_width, half_width, n))
