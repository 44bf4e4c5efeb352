"""Random instances: chordal DAGs without v-structures and Dirichlet CPTs."""

from __future__ import annotations

import numpy as np

from .graph import MixedGraph, chordalize
from .network import DiscreteNet


def node_names(n: int) -> list[str]:
    return [f"V{i + 1}" for i in range(n)]


def random_chordal_dag(n: int, rho: float, rng: np.random.Generator, names: list | None = None) -> MixedGraph:
    """Random order sigma; the i-th node draws max(1, Bin(i-1, rho)) parents among its
    predecessors; the skeleton is then chordalized by eliminating in reverse sigma and every
    edge is oriented along sigma."""
    if n < 2:
        raise ValueError("need at least two nodes")
    if not 0 < rho <= 1:
        raise ValueError("rho must lie in (0, 1]")
    names = names or node_names(n)
    sigma = [names[i] for i in rng.permutation(n)]
    edges = set()
    for i in range(1, n):
        k = max(1, int(rng.binomial(i, rho)))
        for j in rng.choice(i, size=k, replace=False):
            edges.add(frozenset((sigma[int(j)], sigma[i])))
    skel = MixedGraph(tuple(names), frozenset(), frozenset(edges))
    chordal = chordalize(skel, list(reversed(sigma)))
    pos = {v: i for i, v in enumerate(sigma)}
    arcs = []
    for e in chordal.undirected:
        a, b = sorted(e, key=pos.__getitem__)
        arcs.append((a, b))
    return MixedGraph(tuple(names), frozenset(arcs))


def random_cpts(graph: MixedGraph, cards, rng: np.random.Generator, concentration: float = 1.0) -> DiscreteNet:
    """Every CPT row drawn from a symmetric Dirichlet (uniform on the simplex by default)."""
    if isinstance(cards, int):
        cards = {v: cards for v in graph.vertices}
    cpts = {}
    for v in graph.vertices:
        pa = sorted(graph.parents(v), key=graph.index)
        shape = tuple(cards[p] for p in pa)
        rows = rng.dirichlet(np.full(cards[v], concentration), size=int(np.prod(shape, dtype=int)))
        cpts[v] = rows.reshape(shape + (cards[v],))
    return DiscreteNet(graph, cards, cpts)
