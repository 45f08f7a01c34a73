from __future__ import annotations

import numpy as np
import pytest

from coopobs.config import builtin_scenario
from coopobs.graph import benchmark_graph, build_matrices

# reference 4-decimal values for the benchmark graph with D = diag(1, 2, 3, 4)
REFERENCE_W = np.array([
    [0.7993, -0.4421, -0.0671, 0.4092],
    [-0.4421, 1.1599, 0.4099, -0.8280],
    [-0.0671, 0.4099, 0.6599, -0.6405],
    [0.4092, -0.8280, -0.6405, 1.1979],
])
REFERENCE_P = np.array([
    [2.4828, -3.2040, -0.9540, 2.4745],
    [-3.2040, 6.7221, 2.2221, -6.1822],
    [-0.9540, 2.2221, 3.7221, -5.0572],
    [2.4745, -6.1822, -5.0572, 9.1741],
])
BENCHMARK_H = np.array([
    [2.0, 0.0, 0.0, -1.0],
    [-1.0, 2.0, -1.0, 0.0],
    [0.0, -1.0, 1.0, 0.0],
    [0.0, -1.0, -1.0, 2.0],
])
BENCHMARK_D = np.array([1.0, 2.0, 3.0, 4.0])

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture(scope="session")
def benchmark_cfg():
    return builtin_scenario("paper_sec5")


@pytest.fixture(scope="session")
def graph():
    return benchmark_graph()


@pytest.fixture(scope="session")
def h_matrix(graph):
    return build_matrices(graph).h


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
