import numpy as np
import pytest

from cprates import rates
from cprates.problem import LinearProblemOperator, build_depth_profiling_operator, make_grid


@pytest.fixture(scope="session")
def grid256():
    return make_grid(256)


@pytest.fixture(scope="session")
def depth256(grid256):
    return build_depth_profiling_operator(grid256)


@pytest.fixture(scope="session")
def source256(depth256, grid256):
    return rates.make_source_instance(depth256, rates.default_source_element(grid256))


@pytest.fixture(scope="session")
def grid64():
    return make_grid(64)


@pytest.fixture(scope="session")
def depth64(grid64):
    return build_depth_profiling_operator(grid64)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_operator(rng, n, weight=1.0):
    return LinearProblemOperator(rng.standard_normal((n, n)) / np.sqrt(n), weight)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
