import numpy as np
import pytest

from stochfv._kernels import warmup

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def _compiled_kernels():
    warmup()


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
