import numpy as np
import pytest

from stochid import SystemModel, kalman_recursion, preset

PRESET_NAMES = ["scalar-stable", "scalar-unstable", "jordan-marginal", "two-state-stable"]


@pytest.fixture
def scalar():
    """A=0.9, C=Q=R=1, Sigma0=0, mu=0."""
    return SystemModel(A=0.9, C=1.0, Q=1.0, R=1.0)


@pytest.fixture
def scalar_kalman(scalar):
    return kalman_recursion(scalar, 60)


@pytest.fixture(params=PRESET_NAMES)
def preset_model(request):
    return preset(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
