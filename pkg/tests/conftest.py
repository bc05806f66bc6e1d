import numpy as np
import pytest
from hypothesis import strategies as st

from outagree.graph import NetworkGraph

FIG2_EDGES = [(0, 1), (0, 2), (1, 2), (1, 3), (2, 3)]
FIG2_Q = [1.0, 2.0, 3.0, 4.0, 5.0]
FIG2_FREQS = [0.1, 0.7, -0.4, -0.2]


@pytest.fixture
def fig2():
    return NetworkGraph(4, FIG2_EDGES)


@pytest.fixture
def triangle():
    return NetworkGraph(3, [(0, 1), (1, 2), (0, 2)])


def random_connected_graph(rng, n, extra=None):
    """Random spanning tree plus ``extra`` chords, random orientations."""
    edges = []
    for j in range(1, n):
        i = int(rng.integers(0, j))
        edges.append((i, j) if rng.random() < 0.5 else (j, i))
    pairs = [(a, b) for a in range(n) for b in range(a + 1, n) if (a, b) not in edges and (b, a) not in edges]
    k = int(rng.integers(0, len(pairs) + 1)) if extra is None else min(extra, len(pairs))
    for idx in rng.permutation(len(pairs))[:k]:
        a, b = pairs[idx]
        edges.append((a, b) if rng.random() < 0.5 else (b, a))
    order = rng.permutation(len(edges))
    return NetworkGraph(n, [edges[i] for i in order])


@st.composite
def connected_graphs(draw, min_n=2, max_n=8):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    return random_connected_graph(np.random.default_rng(seed), n)


# acceptance bookkeeping: one line per criterion, printed in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def record_acceptance(k: int, ok: bool, detail: str) -> str:
    line = f"ACCEPTANCE {k:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE[k] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
