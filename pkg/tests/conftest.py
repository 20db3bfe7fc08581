import numpy as np
import pytest

from pelletsc.generate import generate_case, t1_case
from pelletsc.kernel import LpBackend, get_lp, solve_milp
from pelletsc.model import build_extensive_form


@pytest.fixture(scope="session")
def t1():
    return t1_case()


@pytest.fixture(scope="session")
def t1_ef(t1):
    prob = build_extensive_form(t1.instance, t1.scenarios)
    return prob, solve_milp(prob)


@pytest.fixture(scope="session")
def small_case():
    return generate_case(3, 2, 2, seed=11, n_scenarios=3, n_biomass=1, n_ranges=2)


@pytest.fixture(scope="session")
def highs():
    return LpBackend(get_lp("highs"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
