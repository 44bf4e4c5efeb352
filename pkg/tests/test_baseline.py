import math

import numpy as np
import pytest

from tscd.baseline import chi_square_independence, random_baseline
from tscd.generate import random_chordal_dag, random_cpts
from tscd.graph import MixedGraph, apply_meek_rules, cpdag_of, is_consistent_with
from tscd.network import DiscreteNet
from tscd.separating import graph_separating_system


def test_independent_table():
    r = chi_square_independence([[10, 20], [30, 60]])
    assert r.statistic == pytest.approx(0, abs=1e-12) and r.p_value == pytest.approx(1.0)


def test_diagonal_table():
    r = chi_square_independence([[50, 0], [0, 50]])
    assert r.statistic == pytest.approx(100.0)
    assert r.df == 1 and r.p_value < 1e-6
    # upper tail of chi2(1) at 100 is erfc(sqrt(50))
    assert r.p_value == pytest.approx(math.erfc(math.sqrt(50)), rel=1e-10)


@pytest.mark.parametrize("r,c", [(2, 2), (3, 4), (5, 2)])
def test_df(r, c):
    t = np.random.default_rng(0).integers(1, 20, size=(r, c))
    assert chi_square_independence(t).df == (r - 1) * (c - 1)


def test_degenerate_abstains():
    r = chi_square_independence([[5, 0], [7, 0]])
    assert r.abstained and r.p_value == 1.0
    with pytest.raises(ValueError):
        chi_square_independence([[-1, 2], [3, 4]])


def test_budget_zero_returns_cpdag():
    rng = np.random.default_rng(0)
    dag = random_chordal_dag(4, 0.6, rng)
    cp = cpdag_of(dag)
    res = random_baseline(random_cpts(dag, 2, rng), cp, graph_separating_system(cp).sets, 0, rng)
    assert res.final == cp and res.arm_trace == []


def test_deterministic_edge_oriented():
    g = MixedGraph.from_edges(["U", "W"], [("U", "W")])
    net = DiscreteNet(g, {"U": 2, "W": 2}, {"U": [0.5, 0.5], "W": [[1.0, 0.0], [0.0, 1.0]]})
    cp = cpdag_of(g)
    res = random_baseline(net, cp, [("U",)], 40, np.random.default_rng(0))
    assert res.final.has_edge("U", "W")
    assert res.events[1][0] < 20


def test_monotone_commitments():
    rng = np.random.default_rng(5)
    for _ in range(5):
        dag = random_chordal_dag(5, 0.8, rng)
        cp = cpdag_of(dag)
        res = random_baseline(random_cpts(dag, 2, rng), cp, graph_separating_system(cp).sets, 3000, rng)
        for (_, a), (_, b) in zip(res.events, res.events[1:]):
            assert a.directed <= b.directed
            assert apply_meek_rules(b) == b
            assert is_consistent_with(b, cp)
