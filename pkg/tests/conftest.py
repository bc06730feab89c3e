import numpy as np
import pytest

from sphermix.sphere import build_grid


@pytest.fixture(scope="session")
def full_grid():
    return build_grid(np.pi, 60, 120)


@pytest.fixture(scope="session")
def hemi_grid():
    return build_grid(np.pi / 2, 30, 120)


@pytest.fixture
def rng():
    return np.random.default_rng(42)
