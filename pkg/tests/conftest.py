import sys

import numpy as np
import pytest

from definetti import Exponential, GammaShape, LevyModel


@pytest.fixture
def brownian():
    return LevyModel.brownian(1.0, 1.0)


@pytest.fixture
def cl():
    return LevyModel.cramer_lundberg(3.0, 2.0, Exponential(1.0))


@pytest.fixture
def am():
    return LevyModel.cramer_lundberg(21.4, 10.0, GammaShape(2, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)



def pytest_terminal_summary(terminalreporter):
    lines = getattr(sys.modules.get("test_acceptance"), "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
