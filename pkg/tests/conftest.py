import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ergopt import ExpandingMapSpec, PotentialSpec

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE: dict = {}


@pytest.fixture(scope="session")
def doubling():
    return ExpandingMapSpec(["x/2", "(x+1)/2"], 0.5)


@pytest.fixture(scope="session")
def minus_doubling():
    return ExpandingMapSpec(["(1-x)/2", "(2-x)/2"], 0.5, "reversing")


@pytest.fixture(scope="session")
def pot_x():
    return PotentialSpec(A="x")


@pytest.fixture(scope="session")
def pot_exp():
    return PotentialSpec(g="exp(x)")


@pytest.fixture(scope="session")
def pot_cos():
    return PotentialSpec(A="cos(2*pi*x)")


@pytest.fixture(scope="session")
def pot_ex61():
    return PotentialSpec(A="-(1-x)^2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, name, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
