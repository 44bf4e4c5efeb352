import itertools

import numpy as np
import pytest
from hypothesis import strategies as st

from tscd.graph import MixedGraph, has_directed_cycle


def brute_force_mec(cpdag: MixedGraph) -> list[MixedGraph]:
    """Every acyclic orientation of the undirected edges that keeps the v-structures."""
    und = cpdag.undirected_edges()
    out = []
    for bits in itertools.product((0, 1), repeat=len(und)):
        arcs = set(cpdag.directed) | {(a, b) if bit == 0 else (b, a) for (a, b), bit in zip(und, bits)}
        d = MixedGraph(cpdag.vertices, frozenset(arcs))
        if not has_directed_cycle(d) and d.v_structures() == cpdag.v_structures():
            out.append(d)
    return out


def dag_from_bits(n: int, perm, bits) -> MixedGraph:
    names = [f"X{i}" for i in range(n)]
    order = [names[i] for i in perm]
    arcs = []
    for (i, j), bit in zip(itertools.combinations(range(n), 2), bits):
        if bit:
            arcs.append((order[i], order[j]))
    return MixedGraph(tuple(names), frozenset(arcs))


@st.composite
def dags(draw, min_n=2, max_n=5):
    n = draw(st.integers(min_n, max_n))
    perm = draw(st.permutations(range(n)))
    bits = draw(st.lists(st.booleans(), min_size=n * (n - 1) // 2, max_size=n * (n - 1) // 2))
    return dag_from_bits(n, perm, bits)


def random_dag(n: int, p: float, rng: np.random.Generator) -> MixedGraph:
    perm = rng.permutation(n)
    bits = rng.random(n * (n - 1) // 2) < p
    return dag_from_bits(n, perm, bits)


@pytest.fixture
def four_node_cpdag():
    v = ["V1", "V2", "V3", "V4"]
    return MixedGraph.from_edges(v, [], [("V1", "V2"), ("V1", "V4"), ("V2", "V3"), ("V2", "V4"), ("V3", "V4")])


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
