import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from preimage.fixtures import F2_REGION, f1, f2
from preimage.oracle import linear_regions

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def net_f1():
    return f1()


@pytest.fixture(scope="session")
def net_f2():
    return f2()


@pytest.fixture(scope="session")
def f2_regions(net_f2):
    """Activation cells of F2 on its domain (shared by the oracle-heavy tests)."""
    return linear_regions(net_f2, F2_REGION)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
