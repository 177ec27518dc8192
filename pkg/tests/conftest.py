import numpy as np
import pytest

from cransched.geometry import SystemParams, build_topology, generate_drop


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def drop(params):
    return generate_drop(params, np.random.default_rng(7))


def line_topology(params, positions, tx_power=None):
    return build_topology(params, positions, tx_power)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import REPORT
    except ImportError:
        return
    if REPORT:
        terminalreporter.section("acceptance criteria")
        for line in REPORT:
            terminalreporter.write_line(line)
