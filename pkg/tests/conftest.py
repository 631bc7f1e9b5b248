import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spinstat.interaction import build_heisenberg_chain, build_ising_chain
from spinstat.quasilocal import Lattice

settings.register_profile(
    "spinstat",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("spinstat")


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def chain3():
    return Lattice.chain(3)


@pytest.fixture
def ising4():
    return build_ising_chain(4, J=1.0, h=0.5)


@pytest.fixture
def heis3():
    return build_heisenberg_chain(3, J=1.0)
