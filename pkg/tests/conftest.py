import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qhedge import MarketSpec, build_lattice

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# filled by tests/test_acceptance.py, printed after the run
CRITERIA: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(CRITERIA):
        terminalreporter.write_line(CRITERIA[k])


@pytest.fixture
def lat1():
    """One period, n = 1: grid {0.5, 1.0, 1.5}."""
    return build_lattice(MarketSpec(1, 1, [0.5], [1.5]))


@pytest.fixture
def lat2():
    """Two periods, n = 2, bounds [0.75, 1.25] then [0.5, 1.5]."""
    return build_lattice(MarketSpec(2, 2, [0.75, 0.5], [1.25, 1.5]))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
