import numpy as np
import pytest

from tvdbar.forward import make_disc_mesh
from tvdbar.grids import make_kgrid, make_zgrid


@pytest.fixture(scope="session")
def zgrid7():
    return make_zgrid(7, 2.0)


@pytest.fixture(scope="session")
def kgrid6():
    return make_kgrid(6, 5.0, 10.0)


@pytest.fixture(scope="session")
def mesh3():
    return make_disc_mesh(3)


@pytest.fixture(scope="session")
def mesh4():
    return make_disc_mesh(4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
