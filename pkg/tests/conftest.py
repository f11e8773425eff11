import numpy as np
import pytest
from hypothesis import settings

from linkhe.graph import build_graph

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

# small example graph used across modules: pair (1, 4) shares neighbours 5 and 6
EXAMPLE_EDGES = [(1, 2), (1, 3), (1, 5), (1, 6), (4, 5), (4, 6)]

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def example_graph():
    return build_graph(EXAMPLE_EDGES, 7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
