"""Causal-effect identification in MPDAGs and enumeration of cut configurations."""

from __future__ import annotations

import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .graph import GraphError, MixedGraph, apply_meek_rules, has_directed_cycle, is_consistent_with, pco
from .network import Factor, Intervention, conditional, product, realizations

logger = logging.getLogger(__name__)


class NotIdentifiableError(ValueError):
    """A possibly proper causal path from X to Y starts with an undirected edge."""


def _undirected_starts(m: MixedGraph, xs: set) -> list[tuple]:
    return [(x, v) for x in m.vertices if x in xs for v in sorted(m.neighbors(x), key=m.index) if v not in xs]


def _can_step(m: MixedGraph, a, b) -> bool:
    """Edge a->b or a--b (the path may traverse it from a to b)."""
    return m.has_edge(a, b) or (frozenset((a, b)) in m.undirected)


def find_bad_path(m: MixedGraph, x: Iterable, y: Iterable) -> list | None:
    """A possibly proper causal path from X to Y starting with an undirected edge, or None.

    A path is possibly causal when no edge of the graph points from a later path node to an
    earlier one (chords included); proper means only its first node lies in X.
    """
    xs, ys = set(x), set(y)
    starts = _undirected_starts(m, xs)
    if not starts:
        return None
    # quick reachability prefilter ignoring the chord condition
    seen = {v for _, v in starts}
    queue = deque(seen)
    reach = False
    while queue:
        u = queue.popleft()
        if u in ys:
            reach = True
            break
        for w in m.adjacent_to(u):
            if w not in xs and w not in seen and _can_step(m, u, w):
                seen.add(w)
                queue.append(w)
    if not reach:
        return None

    def extend(path: list, on_path: set):
        last = path[-1]
        if last in ys:
            return list(path)
        for w in sorted(m.adjacent_to(last), key=m.index):
            if w in xs or w in on_path or not _can_step(m, last, w):
                continue
            if any(m.has_edge(w, u) for u in path):
                continue
            path.append(w)
            on_path.add(w)
            found = extend(path, on_path)
            if found:
                return found
            path.pop()
            on_path.discard(w)
        return None

    for x0, v in starts:
        if m.has_edge(v, x0):
            continue
        found = extend([x0, v], {x0, v})
        if found:
            return found
    return None


def is_identifiable(m: MixedGraph, x: Iterable, y: Iterable) -> bool:
    return find_bad_path(m, x, y) is None


def ancestors_in(m: MixedGraph, y: Iterable, within: Iterable) -> set:
    """Directed ancestors of ``y`` in the subgraph induced by ``within``."""
    within = set(within)
    seen = set(y)
    stack = list(seen)
    while stack:
        v = stack.pop()
        for p in m.parents(v):
            if p in within and p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def identify_effect(m: MixedGraph, x: Sequence, y: Sequence, obs: Factor) -> Factor:
    """P_x(y) from the observational joint ``obs`` via the MPDAG adjustment formula.

    Returns a factor over ``x + y``; each slice at a fixed x is a distribution over y.
    Parents of a bucket that lie in X are left as free indices and so take the
    intervened values when the result is sliced at x.
    """
    x, y = tuple(x), tuple(y)
    if set(x) & set(y):
        raise ValueError("x and y must be disjoint")
    if not y:
        raise ValueError("y must be nonempty")
    missing = (set(x) | set(y)) - set(m.vertices)
    if missing:
        raise GraphError(f"nodes outside the graph: {sorted(map(str, missing))}")
    bad = find_bad_path(m, x, y)
    if bad is not None:
        raise NotIdentifiableError(f"possibly proper causal path {bad} starts with an undirected edge")
    rest = [v for v in m.vertices if v not in x]
    anc = ancestors_in(m, y, rest)
    factors = []
    for bucket in pco(m, anc):
        b = tuple(sorted(bucket, key=m.index))
        pa = set().union(*(m.parents(v) for v in b)) - set(b)
        pa = tuple(sorted(pa, key=m.index))
        factors.append(conditional(obs, b, pa))
    f = product(factors)
    cards = dict(zip(obs.scope, obs.cards))
    keep = [v for v in x if v in f.scope] + list(y)
    f = f.marginal(keep)
    ones = Factor(x, [cards[v] for v in x], np.ones([cards[v] for v in x]))
    return product([ones, f], scope=x + y)


@dataclass(frozen=True)
class CutConfig:
    """Orientation of every cut edge between ``target`` and the rest of the graph."""

    target: tuple
    arrows: tuple  # (tail, head) pairs, sorted

    def as_dict(self) -> dict:
        return {"target": [str(v) for v in self.target], "arrows": [[str(a), str(b)] for a, b in self.arrows]}

    def label(self) -> str:
        return " ".join(f"{a}->{b}" for a, b in self.arrows)


def cut_edges(m: MixedGraph, s: Iterable) -> tuple[list, list]:
    """(directed, undirected) edges with exactly one endpoint in ``s``, in canonical order."""
    s = set(s)
    directed = [(a, b) for a, b in m.directed_edges() if (a in s) != (b in s)]
    undirected = [(a, b) for a, b in m.undirected_edges() if (a in s) != (b in s)]
    return directed, undirected


def enumerate_cut_configs(m: MixedGraph, s: Sequence) -> list[tuple[CutConfig, MixedGraph]]:
    """Orient every undirected cut edge both ways, close under Meek rules and keep the
    closures that still represent some DAG of ``m``.

    Orientation vectors are enumerated with 0 meaning "out of s" and the first edge
    varying slowest; invalid vectors are dropped.
    """
    if has_directed_cycle(m):
        raise GraphError("input has a directed cycle")
    if not is_consistent_with(m, m):
        raise GraphError("input represents no DAG")
    s_set = set(s)
    target = tuple(sorted(s_set, key=m.index))
    fixed, free = cut_edges(m, s_set)
    out = []
    dropped = 0
    for bits in itertools.product((0, 1), repeat=len(free)):
        arrows = []
        for (a, b), bit in zip(free, bits):
            inner, outer = (a, b) if a in s_set else (b, a)
            arrows.append((inner, outer) if bit == 0 else (outer, inner))
        g = m.orient_many(arrows)
        if has_directed_cycle(g):
            dropped += 1
            continue
        g = apply_meek_rules(g)
        if not is_consistent_with(g, m):
            dropped += 1
            continue
        cfg = CutConfig(target, tuple(sorted(fixed + arrows, key=lambda e: (m.index(e[0]), m.index(e[1])))))
        out.append((cfg, g))
    if dropped:
        logger.info("target %s: dropped %d of %d cut orientations", target, dropped, 2 ** len(free))
    return out


@dataclass
class CandidateSet:
    """Candidate interventional distributions for one target set.

    ``tables[c, r, :]`` is the flat distribution over ``outcome_scope`` for configuration
    ``configs[c]`` under intervention ``arms[r]``.
    """

    target: tuple
    configs: list
    closures: list
    arms: list
    outcome_scope: tuple
    outcome_cards: tuple
    tables: np.ndarray

    def __len__(self):
        return len(self.configs)

    def factor(self, c: int, r: int) -> Factor:
        return Factor(self.outcome_scope, self.outcome_cards, self.tables[c, r])

    def entries(self) -> dict:
        return {
            cfg: {arm: self.factor(i, j) for j, arm in enumerate(self.arms)} for i, cfg in enumerate(self.configs)
        }

    def index_of(self, arrows: Iterable) -> int:
        arrows = set(arrows)
        for i, cfg in enumerate(self.configs):
            if set(cfg.arrows) <= arrows:
                return i
        raise KeyError("no configuration matches the given orientation")

    def min_separation(self) -> float:
        """Smallest over config pairs of the largest per-arm L1 distance (inf if < 2 configs)."""
        best = np.inf
        for i, j in itertools.combinations(range(len(self.configs)), 2):
            d = np.abs(self.tables[i] - self.tables[j]).sum(axis=1).max()
            best = min(best, float(d))
        return best

    def close_pairs(self, tol: float = 1e-9) -> list[tuple[int, int]]:
        """Config pairs that no arm distinguishes beyond ``tol`` (faithfulness diagnostic)."""
        out = []
        for i, j in itertools.combinations(range(len(self.configs)), 2):
            if np.abs(self.tables[i] - self.tables[j]).sum(axis=1).max() <= tol:
                out.append((i, j))
        return out

    def to_json(self) -> str:
        payload = {
            "target": [str(v) for v in self.target],
            "outcome_scope": [str(v) for v in self.outcome_scope],
            "configs": [
                {
                    "arrows": cfg.as_dict()["arrows"],
                    "distributions": {arm.label(): self.tables[i, j].tolist() for j, arm in enumerate(self.arms)},
                }
                for i, cfg in enumerate(self.configs)
            ],
        }
        return json.dumps(payload, indent=2)


def candidate_distributions(m: MixedGraph, s: Sequence, obs: Factor, diagnose: bool = False) -> CandidateSet:
    """Candidate P_s over V minus S for every valid cut configuration of ``s`` and every s."""
    target = tuple(sorted(set(s), key=m.index))
    cards = dict(zip(obs.scope, obs.cards))
    rest = tuple(v for v in m.vertices if v not in target)
    arms = realizations(target, cards)
    configs, closures, tables = [], [], []
    for cfg, closure in enumerate_cut_configs(m, target):
        eff = identify_effect(closure, target, rest, obs)
        rows = [eff.reduce(arm.as_dict()).reorder(rest).values for arm in arms]
        configs.append(cfg)
        closures.append(closure)
        tables.append(np.stack(rows))
    cset = CandidateSet(
        target=target,
        configs=configs,
        closures=closures,
        arms=arms,
        outcome_scope=rest,
        outcome_cards=tuple(cards[v] for v in rest),
        tables=np.stack(tables) if tables else np.zeros((0, len(arms), int(np.prod([cards[v] for v in rest])))),
    )
    if diagnose:
        close = cset.close_pairs()
        if close:
            logger.warning("target %s: %d candidate pairs are indistinguishable", target, len(close))
    return cset
