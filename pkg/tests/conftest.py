import numpy as np
import pytest

from lemonsignal.instances import canonical, gains_at_bottom, three_crossings
from lemonsignal.matching import solve_g2
from lemonsignal.model import ScalarFn
from lemonsignal.signals import build_nam, build_pool_reveal_pool
from lemonsignal.verification import Objective, const_weight


@pytest.fixture(scope="session")
def canon():
    return canonical()


@pytest.fixture(scope="session")
def canon_g2(canon):
    return solve_g2(canon)


@pytest.fixture(scope="session")
def canon_nam(canon, canon_g2):
    return build_nam(canon, canon_g2)


@pytest.fixture(scope="session")
def quartic_weight():
    # (1 - theta)^4
    return ScalarFn.polynomial([1, -4, 6, -4, 1], kind="weight")


@pytest.fixture(scope="session")
def canon_prp(canon, canon_g2, quartic_weight):
    return build_pool_reveal_pool(canon, quartic_weight, g2=canon_g2)


@pytest.fixture(scope="session")
def unit():
    return const_weight(1.0)


@pytest.fixture(scope="session")
def volume(unit):
    return Objective.volume(unit)


@pytest.fixture(scope="session")
def bottom():
    return gains_at_bottom()


@pytest.fixture(scope="session")
def triple():
    return three_crossings()


def pytest_configure(config):
    np.seterr(all="warn")
