import numpy as np
import pytest

from multisvm.harness import generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_binary_problem(rng, n, dim=2):
    x = rng.normal(size=(n, dim))
    y = rng.choice([-1.0, 1.0], size=n)
    y[0], y[1] = 1.0, -1.0
    return x, y


@pytest.fixture(scope="session")
def small_scene():
    """32x30 three-class scene with well separated classes."""
    return generate_synthetic(32, 30, 3, 4, 8.0, 0.1, seed=7, train_per_class=12, test_per_class=30)
