import numpy as np
import pytest

from crlmix.core import OrdinalDataset
from crlmix.randvar import RngStream


@pytest.fixture
def gen():
    return np.random.default_rng(20240611)


@pytest.fixture
def stream():
    return RngStream(11)


@pytest.fixture
def toy_data():
    """Seven observations, three categories, one covariate."""
    y = np.array([1, 2, 3, 3, 1, 2, 2])
    x = np.array([-1.5, -0.2, 0.4, 1.9, -2.2, 0.0, 0.7])
    return OrdinalDataset(y, np.column_stack([np.ones(7), x]), 3)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
