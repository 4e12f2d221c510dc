import sys

import numpy as np
import pytest

from spam_forge.builder import EvolvingGraph
from spam_forge.model import ModelParams, TorusBox
from spam_forge.points import BLACK, PointCloud


def toy_graph(births, edges, positions=None, colours=None, params=None, side=10.0):
    """Hand-built graph on rows 0..m-1; ``edges`` are (younger row, older row)."""
    births = np.asarray(births, dtype=float)
    m = births.size
    pos = np.zeros((m, 1)) if positions is None else np.asarray(positions, dtype=float).reshape(m, -1)
    col = np.full(m, BLACK, dtype=np.int8) if colours is None else np.asarray(colours, dtype=np.int8)
    params = params or ModelParams(0.8, 1.0, 2.0, pos.shape[1], side ** pos.shape[1])
    cloud = PointCloud(np.arange(m, dtype=np.int64), pos, births, col,
                       TorusBox(pos.shape[1], side), params)
    edges = sorted(edges)
    y = np.array([e[0] for e in edges], dtype=np.int64)
    o = np.array([e[1] for e in edges], dtype=np.int64)
    return EvolvingGraph(cloud, y, o)


@pytest.fixture
def path3():
    # a(0.1) - b(0.5) - c(0.9) with b->a and c->b
    return toy_graph([0.1, 0.5, 0.9], [(1, 0), (2, 1)])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORTED", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l[1:l.index(" ")])):
            terminalreporter.write_line(line)
