import numpy as np
import pytest

from spdegibbs import CATALOG, make_space


@pytest.fixture
def space_fd49():
    return make_space("fd", dx=0.02)


@pytest.fixture
def space_fd9():
    return make_space("fd", dx=0.1)


@pytest.fixture
def space_sp8():
    return make_space("spectral", modes=8)


@pytest.fixture
def cos_nl():
    return CATALOG["cos"]


@pytest.fixture
def zero_nl():
    return CATALOG["zero"]


@pytest.fixture
def linear_nl():
    return CATALOG["linear"]


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
