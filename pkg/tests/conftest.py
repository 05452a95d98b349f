import os

import pytest

from ontime.analytics import OnTimeSpec
from ontime.mdp import ActionSpace, StateSpace, build_model
from ontime.solver import SolverConfig, value_iteration

# Lines recorded by the acceptance suite and by measurement-only checks,
# echoed in the terminal summary.
ACCEPTANCE_LINES = []
REPORT_LINES = []

SLOW = os.environ.get("ONTIME_SLOW", "") not in ("", "0")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
    if REPORT_LINES:
        terminalreporter.section("measurements")
        for line in REPORT_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def small_spec():
    return OnTimeSpec(5, 1)


@pytest.fixture(scope="session")
def small_model(small_spec):
    """Reduced model for fast unit tests: states [-60, 60], 6 delays and repeats."""
    return build_model(0.2, small_spec, StateSpace(-60, 60), ActionSpace(5, 5))


@pytest.fixture(scope="session")
def small_solution(small_model):
    return value_iteration(small_model, SolverConfig(discount=0.99, epsilon=1e-6))


@pytest.fixture(scope="session")
def default_model():
    return build_model(0.2, OnTimeSpec(5, 1))


@pytest.fixture(scope="session")
def default_solution(default_model):
    return value_iteration(default_model, SolverConfig())
