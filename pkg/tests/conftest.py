import numpy as np
import pytest

from aggnet.moments import GroupConfig, NetworkKind


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def two_group_config():
    """The diffuse two-cluster layout used throughout the validation plots."""
    return GroupConfig(
        sizes=np.array([10, 15]),
        centres=np.array([[0.0, 0.0], [1.0, 0.0]]),
        scales=np.array([5.0, 5.0]),
    )


DIRECTED = NetworkKind(directed=True, weighted=False)
UNDIRECTED = NetworkKind(directed=False, weighted=False)
DIRECTED_W = NetworkKind(directed=True, weighted=True)
UNDIRECTED_W = NetworkKind(directed=False, weighted=True)

ALL_KINDS = [DIRECTED, UNDIRECTED, DIRECTED_W, UNDIRECTED_W]


@pytest.fixture(params=ALL_KINDS, ids=["dir", "undir", "dir-w", "undir-w"])
def kind(request):
    return request.param


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criterion verdicts after the test report."""
    import sys

    results = getattr(sys.modules.get("test_acceptance"), "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
