import numpy as np
import pytest

from tabmark import TabularDataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def uniform_ds(rng):
    return TabularDataset.from_array(rng.random((500, 6)))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
