import numpy as np
import pytest

from chaoslab.specialfn import CovarianceModel


@pytest.fixture
def expo1():
    return CovarianceModel.exponential(1.0, 1)


@pytest.fixture
def berry2():
    return CovarianceModel.berry(2)


@pytest.fixture
def berry3():
    return CovarianceModel.berry(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def record_criterion(number, passed, detail):
    """Store the one-line verdict printed in the terminal summary."""
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
