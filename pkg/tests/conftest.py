import numpy as np
import pytest

from gridsleuth.grid import build_tree
from gridsleuth.moments import InjectionStatistics
from gridsleuth.simulator import random_candidates, random_statistics, random_tree

# one line per acceptance criterion, filled by tests/test_acceptance.py
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def suite_case(seed: int):
    """Random radial grid (6-40 nodes) with a candidate superset of up to twice its edges."""
    rng = np.random.Generator(np.random.PCG64(seed))
    n = int(rng.integers(6, 41))
    topo = random_tree(n, rng)
    cand = random_candidates(topo, int(rng.integers(0, n)), rng)
    stats = random_statistics(n, 1.0, rng)
    return topo, cand, stats


@pytest.fixture
def three_leaf():
    """0-1 root edge, then 1-2 (r=2, x=1) and 1-3 (r=1, x=2); unit variances."""
    topo = build_tree(4, [(0, 1, 1.0, 1.0), (1, 2, 2.0, 1.0), (1, 3, 1.0, 2.0)])
    stats = InjectionStatistics.from_variances([0, 1, 1, 1], [0, 1, 1, 1])
    return topo, stats


@pytest.fixture
def chain3():
    topo = build_tree(3, [(0, 1, 1.0, 1.0), (1, 2, 2.0, 1.0)])
    stats = InjectionStatistics.from_variances([0, 1, 1], [0, 1, 1])
    return topo, stats
