import numpy as np
import pytest

from nlsbranch.grid import RadialGrid
from nlsbranch.model import NonlinearityModel
from nlsbranch.soliton import SolitonBranch
from nlsbranch.spectral import SpectralBranch


@pytest.fixture(scope="session")
def cubic3():
    return NonlinearityModel.pure_power(3, 3)


@pytest.fixture(scope="session")
def cubic1():
    return NonlinearityModel.pure_power(1, 3)


@pytest.fixture(scope="session")
def grid3():
    return RadialGrid.from_radius(3, 20.0, 512)


@pytest.fixture(scope="session")
def branch3(cubic3, grid3):
    return SolitonBranch(cubic3, grid3, (0.5, 2.0))


@pytest.fixture(scope="session")
def spectra3(branch3):
    s = SpectralBranch(branch3)
    s.at(1.0)
    return s


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
