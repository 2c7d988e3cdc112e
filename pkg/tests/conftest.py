import numpy as np
import pytest

from bihermitian.grid import FlatBundle, FundamentalGrid, HopfParams

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def params():
    return HopfParams.from_lambda(0.5)


@pytest.fixture(scope="session")
def small_grid(params):
    return FundamentalGrid(params, 8, 9, 8, 8)


@pytest.fixture(scope="session")
def baseline_bundle():
    return FlatBundle(-1, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
