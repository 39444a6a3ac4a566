import math

import pytest

from slipid.dynamics import GaitParams
from slipid.simulator import InitialConditions

ACCEPTANCE_LINES = []


@pytest.fixture
def walker():
    """A subject that walks for 15 s under the default alpha0 and v0."""
    return GaitParams(70.0, 9000.0, 0.7), InitialConditions(0.0, 0.0)


@pytest.fixture
def deg69():
    return math.radians(69.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
