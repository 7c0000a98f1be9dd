import json
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from archrep.graph import NetworkGraph, OpDescriptor

TESTS = Path(__file__).parent
GOLDEN = TESTS / "golden"
sys.path.insert(0, str(TESTS))

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


def golden(name):
    return json.loads((GOLDEN / name).read_text())


def chain(n, kind="conv", **attrs):
    nodes = [OpDescriptor("input")] + [OpDescriptor(kind, dict(attrs)) for _ in range(max(n - 2, 0))]
    if n > 1:
        nodes.append(OpDescriptor("output"))
    nodes = nodes[:n]
    return NetworkGraph.from_edges(nodes, [(i, i + 1) for i in range(n - 1)], id=f"chain{n}")


def random_dag(rng, n, p=0.35):
    A = np.triu((rng.random((n, n)) < p).astype(np.int8), k=1)
    kinds = ("conv", "bn", "relu", "pool", "add", "concat")
    nodes = [OpDescriptor(str(rng.choice(kinds)), {"kernel_size": int(rng.integers(1, 8))}) for _ in range(n)]
    return NetworkGraph(nodes=nodes, adjacency=A, id="dag")


def static_fixture():
    return {"batch_size": 4.0, "flops": 2.5e9, "parameter_count": 1.1e6, "memory_access": 5.2e7}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
