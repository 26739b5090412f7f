import numpy as np
import pytest

ACCEPTANCE_LINES = []


def random_spd(rng, n, jitter=0.1):
    a = rng.standard_normal((n, n))
    return a @ a.T + jitter * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
