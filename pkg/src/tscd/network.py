"""Discrete Bayesian networks, dense factors, interventional distributions and sampling."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

from .graph import GraphError, MixedGraph

JOINT_SIZE_CAP = 2 ** 24
ROW_TOL = 1e-12


class NetworkError(ValueError):
    pass


class Factor:
    """Dense nonnegative table over the joint assignment space of ``scope``.

    ``table`` has one axis per scope variable, in scope order.
    """

    __slots__ = ("scope", "cards", "table")

    def __init__(self, scope: Sequence[Hashable], cards: Sequence[int], table):
        scope = tuple(scope)
        cards = tuple(int(c) for c in cards)
        if len(set(scope)) != len(scope):
            raise NetworkError("duplicate variables in factor scope")
        if len(scope) != len(cards):
            raise NetworkError("scope and cardinalities differ in length")
        table = np.asarray(table, dtype=float).reshape(cards)
        if np.any(table < 0):
            raise NetworkError("factor entries must be nonnegative")
        self.scope = scope
        self.cards = cards
        self.table = table

    def __repr__(self) -> str:
        return f"Factor(scope={self.scope}, cards={self.cards})"

    @property
    def values(self) -> np.ndarray:
        """Flat row-major view in scope order."""
        return self.table.reshape(-1)

    def card_of(self, v) -> int:
        return self.cards[self.scope.index(v)]

    def total(self) -> float:
        return float(self.table.sum())

    def normalize(self) -> "Factor":
        z = self.table.sum()
        if z <= 0:
            raise NetworkError("cannot normalize a zero factor")
        return Factor(self.scope, self.cards, self.table / z)

    def marginal(self, keep: Iterable) -> "Factor":
        """Sum out everything not in ``keep``; result scope follows ``keep``'s order."""
        keep = tuple(keep)
        missing = [v for v in keep if v not in self.scope]
        if missing:
            raise NetworkError(f"variables not in scope: {missing}")
        drop = tuple(i for i, v in enumerate(self.scope) if v not in keep)
        t = self.table.sum(axis=drop) if drop else self.table
        rest = [v for v in self.scope if v in keep]
        perm = [rest.index(v) for v in keep]
        return Factor(keep, [self.card_of(v) for v in keep], np.transpose(t, perm))

    def reorder(self, scope: Sequence) -> "Factor":
        scope = tuple(scope)
        if set(scope) != set(self.scope) or len(scope) != len(self.scope):
            raise NetworkError("reorder needs a permutation of the scope")
        perm = [self.scope.index(v) for v in scope]
        return Factor(scope, [self.cards[i] for i in perm], np.transpose(self.table, perm))

    def reduce(self, assignment: Mapping) -> "Factor":
        """Condition-free slice: fix the given variables and drop them from the scope."""
        idx = []
        scope, cards = [], []
        for v, c in zip(self.scope, self.cards):
            if v in assignment:
                idx.append(int(assignment[v]))
            else:
                idx.append(slice(None))
                scope.append(v)
                cards.append(c)
        return Factor(scope, cards, self.table[tuple(idx)])

    def __mul__(self, other: "Factor") -> "Factor":
        return product([self, other])

    def allclose(self, other: "Factor", atol: float = 1e-9) -> bool:
        if set(self.scope) != set(other.scope):
            return False
        o = other.reorder(self.scope)
        return o.cards == self.cards and bool(np.allclose(self.table, o.table, rtol=0, atol=atol))


def product(factors: Sequence[Factor], scope: Sequence | None = None) -> Factor:
    """Pointwise product over the union scope (or the given ``scope`` superset order)."""
    cards: dict = {}
    for f in factors:
        for v, c in zip(f.scope, f.cards):
            if cards.setdefault(v, c) != c:
                raise NetworkError(f"cardinality mismatch for {v!r}")
    if scope is None:
        scope = []
        for f in factors:
            scope += [v for v in f.scope if v not in scope]
    scope = tuple(scope)
    ids = {v: i for i, v in enumerate(scope)}
    operands = []
    for f in factors:
        operands += [f.table, [ids[v] for v in f.scope]]
    out_cards = [cards[v] for v in scope]
    if not factors:
        return Factor(scope, out_cards, np.ones(out_cards))
    present = [i for i, v in enumerate(scope) if any(v in f.scope for f in factors)]
    t = np.einsum(*operands, present, optimize=len(factors) > 2)
    shape = [cards[v] if i in present else 1 for i, v in enumerate(scope)]
    t = np.broadcast_to(t.reshape(shape), out_cards).copy()
    return Factor(scope, out_cards, t)


def conditional(joint: Factor, child: Sequence, given: Sequence) -> Factor:
    """P(child | given) as a factor over child + given (zero where the condition has no mass)."""
    child, given = tuple(child), tuple(given)
    num = joint.marginal(child + given)
    den = joint.marginal(given) if given else None
    if den is None:
        z = num.table.sum()
        return Factor(num.scope, num.cards, num.table / z if z > 0 else num.table)
    d = den.table.reshape((1,) * len(child) + den.cards)
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(d > 0, num.table / np.where(d > 0, d, 1.0), 0.0)
    return Factor(num.scope, num.cards, t)


def kl(p: Factor, q: Factor) -> float:
    """KL(p || q) in nats with 0 log 0 = 0 and x log(x/0) = inf."""
    if set(p.scope) != set(q.scope) or len(p.scope) != len(q.scope):
        raise NetworkError("kl requires identical scopes")
    q = q.reorder(p.scope)
    if q.cards != p.cards:
        raise NetworkError("kl requires identical cardinalities")
    return kl_arrays(p.values, q.values)


def kl_arrays(p: np.ndarray, q: np.ndarray) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(max(0.0, np.sum(p[mask] * np.log(p[mask] / q[mask]))))


@dataclass(frozen=True)
class Intervention:
    """do(S = s); an empty target set is the observational arm."""

    targets: tuple = ()
    values: tuple = ()

    def __post_init__(self):
        if len(self.targets) != len(self.values):
            raise NetworkError("targets and values differ in length")
        if len(set(self.targets)) != len(self.targets):
            raise NetworkError("duplicate intervention target")
        pairs = sorted(zip(self.targets, (int(x) for x in self.values)), key=lambda p: str(p[0]))
        object.__setattr__(self, "targets", tuple(p[0] for p in pairs))
        object.__setattr__(self, "values", tuple(p[1] for p in pairs))

    @classmethod
    def of(cls, assignment: Mapping) -> "Intervention":
        return cls(tuple(assignment), tuple(assignment.values()))

    def as_dict(self) -> dict:
        return dict(zip(self.targets, self.values))

    def label(self) -> str:
        if not self.targets:
            return "obs"
        return ",".join(f"{t}={v}" for t, v in zip(self.targets, self.values))


def realizations(targets: Sequence, cards: Mapping) -> list[Intervention]:
    """All interventions do(S=s) for s in the Cartesian domain of S, in row-major order."""
    targets = sorted(targets, key=str)
    doms = [range(cards[t]) for t in targets]
    return [Intervention(tuple(targets), vals) for vals in itertools.product(*doms)]


@dataclass(frozen=True, eq=False)
class DiscreteNet:
    """DAG with per-variable cardinalities and CPTs.

    ``cpts[v]`` has shape ``(card(p1), ..., card(pk), card(v))`` with parents in
    ``parent_order[v]``.
    """

    graph: MixedGraph
    cards: Mapping
    cpts: Mapping
    parent_order: Mapping = None
    states: Mapping = None
    name: str = "network"
    _topo: tuple = field(default=None, init=False, repr=False)

    def __post_init__(self):
        g = self.graph
        if not g.is_dag:
            raise NetworkError("network graph must be a DAG")
        cards = {v: int(self.cards[v]) for v in g.vertices}
        po = {}
        for v in g.vertices:
            given = tuple(self.parent_order[v]) if self.parent_order and v in self.parent_order else None
            if given is None:
                given = tuple(sorted(g.parents(v), key=g.index))
            if set(given) != set(g.parents(v)) or len(given) != len(g.parents(v)):
                raise NetworkError(f"parent order of {v!r} does not match the graph")
            po[v] = given
        cpts = {}
        for v in g.vertices:
            if cards[v] < 1:
                raise NetworkError(f"cardinality of {v!r} must be positive")
            shape = tuple(cards[p] for p in po[v]) + (cards[v],)
            t = np.asarray(self.cpts[v], dtype=float)
            if t.shape != shape:
                raise NetworkError(f"CPT of {v!r} has shape {t.shape}, expected {shape}")
            if np.any(t < 0):
                raise NetworkError(f"CPT of {v!r} has negative entries")
            if not np.allclose(t.sum(axis=-1), 1.0, atol=ROW_TOL * 1e3):
                raise NetworkError(f"CPT rows of {v!r} do not sum to 1")
            sums = t.sum(axis=-1, keepdims=True)
            # rescale only rows that are off, so normalization is idempotent
            t = np.where(np.abs(sums - 1.0) > 1e-14, t / sums, t)
            t.setflags(write=False)
            cpts[v] = t
        states = {v: tuple(self.states[v]) for v in g.vertices} if self.states else None
        object.__setattr__(self, "cards", cards)
        object.__setattr__(self, "parent_order", po)
        object.__setattr__(self, "cpts", cpts)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "_topo", tuple(g.topological_order()))

    @property
    def vertices(self) -> tuple:
        return self.graph.vertices

    @property
    def topological_order(self) -> tuple:
        return self._topo

    def joint_size(self) -> int:
        return math.prod(self.cards.values())

    def cpt_factor(self, v) -> Factor:
        scope = self.parent_order[v] + (v,)
        return Factor(scope, [self.cards[u] for u in scope], self.cpts[v])

    def check_intervention(self, iv: Intervention) -> None:
        for t, x in zip(iv.targets, iv.values):
            if t not in self.cards:
                raise NetworkError(f"intervention target {t!r} is not a variable")
            if not 0 <= x < self.cards[t]:
                raise NetworkError(f"value {x} out of range for {t!r}")


def _check_size(net: DiscreteNet, cap: int) -> None:
    if net.joint_size() > cap:
        raise NetworkError(f"joint domain has {net.joint_size()} cells, above the cap {cap}")


def interventional(net: DiscreteNet, iv: Intervention, cap: int = JOINT_SIZE_CAP) -> Factor:
    """Truncated factorization: joint over all variables under do(S=s)."""
    net.check_intervention(iv)
    _check_size(net, cap)
    clamp = iv.as_dict()
    factors = []
    for v in net.vertices:
        if v in clamp:
            ind = np.zeros(net.cards[v])
            ind[clamp[v]] = 1.0
            factors.append(Factor((v,), (net.cards[v],), ind))
        else:
            factors.append(net.cpt_factor(v))
    return product(factors, scope=net.vertices)


def joint(net: DiscreteNet, cap: int = JOINT_SIZE_CAP) -> Factor:
    return interventional(net, Intervention(), cap)


def interventional_marginal(net: DiscreteNet, iv: Intervention, cap: int = JOINT_SIZE_CAP) -> Factor:
    """P_s(v) over the non-intervened variables, in network vertex order."""
    rest = [v for v in net.vertices if v not in iv.targets]
    return interventional(net, iv, cap).marginal(rest)


def draw_sample(net: DiscreteNet, iv: Intervention, rng: np.random.Generator) -> dict:
    """One ancestral sample under do(S=s)."""
    net.check_intervention(iv)
    clamp = iv.as_dict()
    out = {}
    for v in net.topological_order:
        if v in clamp:
            out[v] = clamp[v]
            continue
        row = net.cpts[v][tuple(out[p] for p in net.parent_order[v])]
        out[v] = int(min(np.searchsorted(np.cumsum(row), rng.random(), side="right"), len(row) - 1))
    return out


def net_from_graph(graph: MixedGraph, cards: Mapping, cpts: Mapping, **kw) -> DiscreteNet:
    """Convenience constructor with parents in graph vertex order."""
    return DiscreteNet(graph, cards, cpts, **kw)


__all__ = [
    "Factor",
    "DiscreteNet",
    "Intervention",
    "NetworkError",
    "GraphError",
    "conditional",
    "product",
    "kl",
    "kl_arrays",
    "realizations",
    "joint",
    "interventional",
    "interventional_marginal",
    "draw_sample",
    "JOINT_SIZE_CAP",
]
