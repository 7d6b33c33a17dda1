import numpy as np
import pytest

from asepmix.chains import HeightFunction, ParticleConfig, height


def random_config(rng: np.random.Generator, n: int, k: int) -> ParticleConfig:
    bits = np.zeros(n, dtype=int)
    bits[rng.choice(n, size=k, replace=False)] = 1
    return ParticleConfig(tuple(int(b) for b in bits))


def random_height(rng: np.random.Generator, n: int, k: int) -> HeightFunction:
    return height(random_config(rng, n, k))


def ordered_pair(rng: np.random.Generator, n: int, k: int):
    """Pointwise max/min of two random bridges (both are valid bridges)."""
    a = random_height(rng, n, k)
    b = random_height(rng, n, k)
    hi = HeightFunction(tuple(max(x, y) for x, y in zip(a.values, b.values)))
    lo = HeightFunction(tuple(min(x, y) for x, y in zip(a.values, b.values)))
    return hi, lo


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
