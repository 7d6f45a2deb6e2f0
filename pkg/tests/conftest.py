import numpy as np
import pytest

from specflow import get_eigen_cache, init_pool


@pytest.fixture(autouse=True)
def fresh_state():
    init_pool(1)
    get_eigen_cache().clear()
    yield
    get_eigen_cache().clear()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
