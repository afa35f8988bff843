import numpy as np
import pytest

from expbergman.geometry import LatticeParams, build_lattice
from expbergman.kernel import compute_moments
from expbergman.measures import canonical_measures
from expbergman.quadrature import field_grid
from expbergman.weights import make_weight

# lattice scale used by every equivalence check
EQ_R, EQ_S, EQ_DELTA = 1.0, 0.9, 1.0


@pytest.fixture(scope="session")
def weight():
    return make_weight("EXP", 1.0, 1.0, 0.95)


@pytest.fixture(scope="session")
def table(weight):
    return compute_moments(weight, 256)


@pytest.fixture(scope="session")
def flat_table():
    return compute_moments(make_weight("FLAT", r_max=1.0), 256)


@pytest.fixture(scope="session")
def grid(weight):
    return field_grid(weight)


@pytest.fixture(scope="session")
def eq_lattice(weight):
    return build_lattice(weight, LatticeParams(r=EQ_R, s=EQ_S), seed=0)


@pytest.fixture(scope="session")
def lattice(weight):
    return build_lattice(weight, LatticeParams(r=0.5, s=0.5), seed=0)


@pytest.fixture(scope="session")
def canon(weight, eq_lattice):
    return canonical_measures(weight, eq_lattice)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
