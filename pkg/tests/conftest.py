import pytest

from metastable_csma.rates import RateSchedule
from metastable_csma.topology import enumerate_configs, make_complete_bipartite, make_even_torus


@pytest.fixture(scope="session")
def k11():
    g = make_complete_bipartite(1, 1)
    return g, enumerate_configs(g)


@pytest.fixture(scope="session")
def k22():
    g = make_complete_bipartite(2, 2)
    return g, enumerate_configs(g)


@pytest.fixture(scope="session")
def k33():
    g = make_complete_bipartite(3, 3)
    return g, enumerate_configs(g)


@pytest.fixture(scope="session")
def torus22():
    g = make_even_torus(2, 2)
    return g, enumerate_configs(g)


def frozen(lu: float, lv: float, beta_v=2) -> RateSchedule:
    """Homogeneous schedule with lambda_U = lu and lambda_V = lv."""
    return RateSchedule(lam=1.0, c_u=lu, c_v=lv ** (1 / float(beta_v)), mu_u=1.0, mu_v=1.0,
                        beta_u=1, beta_v=beta_v, freeze_time=0.0)
