"""Intervention target families: string labelings, (n, k)-separating systems and
coloring-based separating systems for the undirected part of a CPDAG."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .graph import GraphError, MixedGraph, is_chordal, mcs_order


@dataclass(frozen=True)
class TargetFamily:
    """Ordered, deduplicated list of nonempty target sets."""

    sets: tuple
    bound_k: int | None = None

    def __post_init__(self):
        seen, out = set(), []
        for s in self.sets:
            s = tuple(s)
            if not s:
                raise ValueError("target sets must be nonempty")
            if len(set(s)) != len(s):
                raise ValueError(f"duplicate node in target set {s}")
            if self.bound_k is not None and len(s) > self.bound_k:
                raise ValueError(f"target set {s} exceeds the size bound {self.bound_k}")
            key = frozenset(s)
            if key not in seen:
                seen.add(key)
                out.append(s)
        object.__setattr__(self, "sets", tuple(out))

    def __len__(self):
        return len(self.sets)

    def __iter__(self):
        return iter(self.sets)

    def to_json(self) -> str:
        return json.dumps({"sets": [[_jsonable(v) for v in s] for s in self.sets]})

    @classmethod
    def from_json(cls, text: str) -> "TargetFamily":
        data = json.loads(text)
        if not isinstance(data, dict) or "sets" not in data:
            raise ValueError('target family JSON must look like {"sets": [[...], ...]}')
        return cls(tuple(tuple(s) for s in data["sets"]), data.get("bound_k"))


def _jsonable(v):
    return v if isinstance(v, (str, int)) else str(v)


def _label_length(n: int, a: int) -> int:
    ell = 1
    while a ** ell < n:
        ell += 1
    return ell


def label_elements(n: int, a: int) -> list[tuple[int, ...]]:
    """Distinct labels of length ceil(log_a n) over the letters {0, ..., a}.

    Each letter appears at most ceil(n / a) times in every position.
    """
    if n < 2 or a < 2:
        raise ValueError("label_elements needs n >= 2 and a >= 2")
    ell = _label_length(n, a)
    labels = [[0] * ell for _ in range(n)]
    for d in range(1, ell + 1):
        p_d, r_d = divmod(n, a ** d)
        p_prev = n // a ** (d - 1)
        seq = [(j // a ** (d - 1)) % a for j in range(p_d * a ** d)]
        if r_d:
            rep = math.ceil(r_d / a)
            seq += [j // rep for j in range(r_d)]
        cut = a ** (d - 1) * p_prev
        seq = [v + 1 if j >= cut else v for j, v in enumerate(seq)]
        for j in range(n):
            labels[j][d - 1] = seq[j]
    return [tuple(lab) for lab in labels]


def effective_k(n: int, k: int) -> int:
    """Size bound actually used: ``k`` itself when k < n/2, else max(1, ceil(n/2) - 1)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if 2 * k < n:
        return k
    return max(1, math.ceil(n / 2) - 1)


def nk_size_bound(n: int, k: int) -> int:
    """ceil(n/k) * ceil(log_{ceil(n/k)} n)."""
    a = math.ceil(n / k)
    if a < 2:
        raise ValueError("bound undefined when ceil(n/k) < 2")
    return a * _label_length(n, a)


def nk_separating_system(n: int, k: int, elements: Sequence | None = None) -> TargetFamily:
    """k-separating system on ``n`` elements (indices 0..n-1 unless ``elements`` given)."""
    if n < 2:
        raise ValueError("need at least two elements")
    if elements is None:
        elements = list(range(n))
    if len(elements) != n:
        raise ValueError("elements must have length n")
    kk = effective_k(n, k)
    a = math.ceil(n / kk)
    labels = label_elements(n, a)
    sets = []
    for pos in range(len(labels[0])):
        for b in range(1, a + 1):
            s = tuple(elements[i] for i in range(n) if labels[i][pos] == b)
            if s:
                sets.append(s)
    return TargetFamily(tuple(sets), kk)


def separates(family: Iterable, a, b) -> bool:
    return any((a in s) != (b in s) for s in family)


def uncut_edges(cpdag: MixedGraph, family: Iterable) -> list[tuple]:
    """Undirected edges of ``cpdag`` that no set in ``family`` cuts."""
    sets = [set(s) for s in family]
    return [(a, b) for a, b in cpdag.undirected_edges() if not separates(sets, a, b)]


def is_separating(cpdag: MixedGraph, family: Iterable) -> bool:
    return not uncut_edges(cpdag, family)


def greedy_coloring(g: MixedGraph) -> dict:
    """Color the undirected part greedily in maximum-cardinality-search order.

    On chordal graphs this uses exactly as many colors as the largest clique.
    """
    und = MixedGraph(g.vertices, frozenset(), g.undirected)
    color = {}
    for v in mcs_order(und):
        used = {color[w] for w in und.neighbors(v) if w in color}
        c = 0
        while c in used:
            c += 1
        color[v] = c
    return color


def graph_separating_system(cpdag: MixedGraph, k: int | None = None) -> TargetFamily:
    """Target family cutting every undirected edge of ``cpdag``.

    Vertices touching an undirected edge are colored; a separating system over the colors is
    built with the labeling scheme and expanded to vertex sets. With ``k`` set, expanded sets
    are split into chunks of at most ``k`` vertices (splitting never un-cuts an edge).
    """
    und = MixedGraph(cpdag.vertices, frozenset(), cpdag.undirected)
    if not is_chordal(und):
        raise GraphError("undirected part is not chordal")
    if k is not None and k < 1:
        raise ValueError("k must be at least 1")
    active = [v for v in cpdag.vertices if cpdag.neighbors(v)]
    if not active:
        return TargetFamily((), k)
    color = greedy_coloring(und)
    chi = max(color[v] for v in active) + 1
    classes = [[v for v in active if color[v] == c] for c in range(chi)]
    color_sets = nk_separating_system(chi, chi).sets
    sets = []
    for cs in color_sets:
        members = sorted((v for c in cs for v in classes[c]), key=cpdag.index)
        if k is None:
            sets.append(tuple(members))
        else:
            sets += [tuple(members[i:i + k]) for i in range(0, len(members), k)]
    fam = TargetFamily(tuple(sets), k)
    assert is_separating(cpdag, fam.sets)
    return fam
