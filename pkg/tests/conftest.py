import numpy as np
import pytest

from roughnet import dataset
from roughnet.dataset import NARROW, WIDE


@pytest.fixture(scope="session")
def wide_small():
    """100 WIDE rows; enough for column statistics and quick training runs."""
    return dataset.generate(WIDE, 100, seed=5, workers=1)


@pytest.fixture(scope="session")
def narrow_small():
    return dataset.generate(NARROW, 60, seed=6, workers=1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def verdict():
    """Record and print one PASS/FAIL line per acceptance check."""
    def record(name, passed, detail=""):
        line = f"{'PASS' if passed else 'FAIL'} criterion {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
