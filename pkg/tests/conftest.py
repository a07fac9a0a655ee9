import numpy as np
import pytest

from difftomo import Atom, Beam, Grid2, Grid3, Phantom


@pytest.fixture(scope="session")
def beam200():
    return Beam(e_volts=200e3)


@pytest.fixture
def grid64():
    return Grid2(nx=64, ny=64, dx=1.0, dy=1.0)


@pytest.fixture
def grid3_small():
    return Grid3(nx=64, ny=64, nz=48, dx=1.0, dy=1.0, dz=1.0, z0=-40.0)


@pytest.fixture
def three_atom_phantom():
    return Phantom(
        atoms=(
            Atom(x=5.0, y=-3.0, z=-10.0, v0=50.0, sigma=0.8),
            Atom(x=-8.0, y=6.0, z=-30.0, v0=40.0, sigma=1.0),
            Atom(x=2.0, y=1.0, z=-20.0, v0=60.0, sigma=0.9),
        ),
        z0=-40.0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(42)
