"""Random-intervention baseline: chi-square tests orient cut edges of a separating system."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaincc

from .graph import MixedGraph, apply_meek_rules, has_directed_cycle, is_consistent_with
from .network import DiscreteNet, Intervention, realizations
from .tracker import NetworkOracle

logger = logging.getLogger(__name__)

ALPHA_LEVEL = 0.05
MIN_SAMPLES = 30


@dataclass
class ChiSquareResult:
    statistic: float
    df: int
    p_value: float
    abstained: bool


def chi_square_independence(table) -> ChiSquareResult:
    """Pearson's test of independence for an r x c contingency table of counts.

    Empty rows and columns are dropped; a table left with fewer than two rows or columns
    abstains with p = 1.
    """
    t = np.asarray(table, dtype=float)
    if t.ndim != 2:
        raise ValueError("contingency table must be 2-d")
    if np.any(t < 0) or not np.all(np.isfinite(t)):
        raise ValueError("counts must be finite and nonnegative")
    t = t[t.sum(axis=1) > 0][:, t.sum(axis=0) > 0]
    if t.shape[0] < 2 or t.shape[1] < 2:
        return ChiSquareResult(0.0, 0, 1.0, True)
    n = t.sum()
    expected = np.outer(t.sum(axis=1), t.sum(axis=0)) / n
    stat = float(((t - expected) ** 2 / expected).sum())
    df = (t.shape[0] - 1) * (t.shape[1] - 1)
    p = float(gammaincc(df / 2.0, stat / 2.0))
    return ChiSquareResult(stat, df, min(max(p, 0.0), 1.0), False)


class _TargetTables:
    """Pooled counts of (assigned value of u, observed value of w) for each cut edge of one target."""

    def __init__(self, target: tuple, arms: list, scope: tuple, cards: dict, edges: list):
        self.target = target
        self.arms = arms
        self.edges = edges  # (u in target, w outside)
        self.samples = 0
        shape = tuple(cards[v] for v in scope)
        flat = np.arange(int(np.prod(shape)))
        coords = np.unravel_index(flat, shape)
        pos = {v: i for i, v in enumerate(scope)}
        self.u_value = [[arm.as_dict()[u] for arm in arms] for u, _ in edges]
        self.w_value = [coords[pos[w]] for _, w in edges]
        self.tables = [np.zeros((cards[u], cards[w]), dtype=np.int64) for u, w in edges]

    def add(self, r: int, outcome: int) -> None:
        self.samples += 1
        for i in range(len(self.edges)):
            self.tables[i][self.u_value[i][r], self.w_value[i][outcome]] += 1


@dataclass
class BaselineResult:
    events: list  # (samples taken, graph estimate from then on)
    arm_trace: list  # (target index, realization index) per round
    targets: list
    tests: int = 0
    forced: int = 0
    skipped: list = field(default_factory=list)

    def graph_at(self, t: int) -> MixedGraph:
        g = self.events[0][1]
        for s, h in self.events:
            if s > t:
                break
            g = h
        return g

    @property
    def final(self) -> MixedGraph:
        return self.events[-1][1]


def _commit(g: MixedGraph, cpdag: MixedGraph, arrow: tuple) -> MixedGraph | None:
    h = g.orient(*arrow)
    if has_directed_cycle(h):
        return None
    h = apply_meek_rules(h)
    return h if is_consistent_with(h, cpdag) else None


def random_baseline(
    net: DiscreteNet,
    cpdag: MixedGraph,
    targets: Sequence,
    budget: int,
    rng: np.random.Generator,
    level: float = ALPHA_LEVEL,
    min_samples: int = MIN_SAMPLES,
) -> BaselineResult:
    """Sample uniformly random realizations of uniformly random targets and orient cut edges.

    After each sample of target S, every still-undirected cut edge u--w (u in S) is tested:
    dependence at ``level`` orients u->w; independence retained once S has ``min_samples``
    samples orients w->u. If the preferred orientation contradicts the current estimate the
    opposite one is forced. Meek rules are applied after every commitment.
    """
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    targets = [tuple(sorted(set(s), key=cpdag.index)) for s in targets]
    if not targets:
        raise ValueError("need at least one target set")
    cards = dict(net.cards)
    flat_arms, flat_scopes, offsets, per_target = [], [], [], []
    for s in targets:
        arms = realizations(s, cards)
        scope = tuple(v for v in cpdag.vertices if v not in s)
        offsets.append(len(flat_arms))
        flat_arms += arms
        flat_scopes += [scope] * len(arms)
        edges = [(a, b) if a in s else (b, a) for a, b in cpdag.undirected_edges() if (a in s) != (b in s)]
        per_target.append(_TargetTables(s, arms, scope, cards, edges))
    env = NetworkOracle(net, flat_arms, flat_scopes)
    g = cpdag
    events = [(0, g)]
    trace = []
    res = BaselineResult(events, trace, targets)
    for step in range(budget):
        ti = int(rng.integers(len(targets)))
        tt = per_target[ti]
        r = int(rng.integers(len(tt.arms)))
        outcome = env.sample(offsets[ti] + r, rng)
        trace.append((ti, r))
        tt.add(r, outcome)
        changed = False
        for i, (u, w) in enumerate(tt.edges):
            if frozenset((u, w)) not in g.undirected:
                continue
            res.tests += 1
            test = chi_square_independence(tt.tables[i])
            if not test.abstained and test.p_value < level:
                prefer = (u, w)
            elif tt.samples >= min_samples:
                prefer = (w, u)
            else:
                continue
            h = _commit(g, cpdag, prefer)
            if h is None:
                h = _commit(g, cpdag, prefer[::-1])
                if h is None:
                    res.skipped.append(prefer)
                    logger.warning("edge %s-%s admits no consistent orientation", u, w)
                    continue
                res.forced += 1
            g = h
            changed = True
        if changed:
            events.append((step + 1, g))
    return res
