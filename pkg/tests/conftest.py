import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bmokit.space import from_distance_matrix, grid_1d, grid_2d, path_graph, tree_graph

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def grid8():
    return grid_1d(8)


@pytest.fixture(scope="session")
def grid8n():
    return grid_1d(8, normalize=True)


@pytest.fixture(scope="session")
def two_point():
    return from_distance_matrix([[0.0, 1.0], [1.0, 0.0]])


@pytest.fixture(scope="session")
def one_point():
    return from_distance_matrix([[0.0]])


@pytest.fixture(scope="session")
def integer_spaces():
    """Spaces whose distances are integers, so quarter-step radii are exhaustive."""
    return [
        grid_1d(8),
        grid_1d(10, exponent=1.0),
        grid_1d(9, exponent=-0.5),
        path_graph(7),
        tree_graph(15),
        tree_graph(12, seed=3),
        grid_2d(3, metric="manhattan"),
        grid_2d(3, exponent=0.5, metric="chebyshev"),
    ]


@pytest.fixture(scope="session")
def field_spaces():
    return [
        grid_1d(12),
        grid_1d(10, exponent=1.5),
        grid_2d(4),
        grid_2d(4, exponent=-1.0, metric="manhattan"),
        tree_graph(15),
        tree_graph(13, seed=7),
    ]



def pytest_terminal_summary(terminalreporter):
    """Print the per-criterion lines collected by the acceptance suite."""
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if not lines:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for line in lines:
        terminalreporter.write_line(line)
