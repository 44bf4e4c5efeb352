import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tscd.effects import (
    NotIdentifiableError,
    candidate_distributions,
    cut_edges,
    enumerate_cut_configs,
    find_bad_path,
    identify_effect,
    is_identifiable,
)
from tscd.generate import random_chordal_dag, random_cpts
from tscd.graph import MixedGraph, apply_meek_rules, cpdag_of, enumerate_mec, is_consistent_with, is_valid_cpdag_shape
from tscd.network import Factor, Intervention, conditional, interventional_marginal, joint, product, realizations
from tscd.separating import graph_separating_system

from .conftest import random_dag

V = ["V1", "V2", "V3", "V4"]


def random_mpdag(dag, rng, frac=0.4):
    cp = cpdag_of(dag)
    pick = [e for e in cp.undirected_edges() if rng.random() < frac]
    return apply_meek_rules(cp.orient_many([(a, b) if dag.has_edge(a, b) else (b, a) for a, b in pick]))


def truth_effect(net, x, y, xv):
    iv = Intervention(tuple(x), tuple(xv))
    return interventional_marginal(net, iv).marginal(list(y))


def test_not_identifiable_single_undirected_edge():
    m = MixedGraph.from_edges("XY", [], [("X", "Y")])
    assert not is_identifiable(m, ["X"], ["Y"])
    assert find_bad_path(m, ["X"], ["Y"]) == ["X", "Y"]
    obs = Factor(["X", "Y"], [2, 2], np.full((2, 2), 0.25))
    with pytest.raises(NotIdentifiableError):
        identify_effect(m, ["X"], ["Y"], obs)


def test_chord_blocks_possible_causality():
    # X -- A -- Y with Y -> X: the path X, A, Y is not possibly causal
    m = MixedGraph.from_edges("XAY", [("Y", "X")], [("X", "A"), ("A", "Y")])
    assert is_identifiable(m, ["X"], ["Y"])


def test_no_causal_path_gives_marginal():
    rng = np.random.default_rng(0)
    g = MixedGraph.from_edges("XY", [("Y", "X")])
    net = random_cpts(g, 2, rng)
    obs = joint(net)
    eff = identify_effect(g, ["X"], ["Y"], obs)
    for xv in range(2):
        assert np.allclose(eff.reduce({"X": xv}).values, obs.marginal(["Y"]).values)


def test_overlap_rejected():
    g = MixedGraph.from_edges("XY", [("X", "Y")])
    with pytest.raises(ValueError):
        identify_effect(g, ["X"], ["X", "Y"], Factor(["X", "Y"], [2, 2], np.full((2, 2), 0.25)))


@settings(max_examples=120, deadline=None)
@given(st.integers(3, 6), st.integers(0, 10 ** 6))
def test_identification_matches_truncated_factorization(n, seed):
    rng = np.random.default_rng(seed)
    dag = random_dag(n, 0.5, rng)
    net = random_cpts(dag, 2, rng)
    obs = joint(net)
    m = random_mpdag(dag, rng, frac=float(rng.random()))
    vs = list(dag.vertices)
    rng.shuffle(vs)
    kx = int(rng.integers(1, 3))
    x, rest = vs[:kx], vs[kx:]
    y = rest[: int(rng.integers(1, len(rest) + 1))]
    if not is_identifiable(m, x, y):
        return
    eff = identify_effect(m, x, y, obs)
    for xv in realizations(x, net.cards):
        got = eff.reduce(xv.as_dict()).reorder(y).values
        want = truth_effect(net, xv.targets, y, xv.values).reorder(y).values
        assert np.allclose(got, want, atol=1e-9)


def four_node_obs(seed=0):
    rng = np.random.default_rng(seed)
    return Factor(V, [2] * 4, rng.dirichlet(np.ones(16)).reshape([2] * 4))


def test_four_node_case_a_effect(four_node_cpdag):
    # both cut edges point into V1, so intervening on V1 leaves the rest unchanged
    m = apply_meek_rules(four_node_cpdag.orient_many([("V2", "V1"), ("V4", "V1")]))
    obs = four_node_obs()
    eff = identify_effect(m, ["V1"], ["V2", "V3", "V4"], obs)
    for v1 in range(2):
        assert np.allclose(eff.reduce({"V1": v1}).reorder(["V2", "V3", "V4"]).values, obs.marginal(["V2", "V3", "V4"]).values)


def test_four_node_golden(four_node_cpdag):
    obs = four_node_obs(7)
    cs = candidate_distributions(four_node_cpdag, ["V1"], obs)
    assert len(cs) == 4

    def c(a, b):
        return conditional(obs, a, b)

    cases = {
        "a": lambda v1: obs.marginal(["V2", "V3", "V4"]),
        "b": lambda v1: product([c(["V4"], []), c(["V3"], ["V2", "V4"]), c(["V2"], ["V1", "V4"]).reduce({"V1": v1})]),
        "c": lambda v1: product([c(["V4"], ["V1", "V2"]).reduce({"V1": v1}), c(["V3"], ["V2", "V4"]), c(["V2"], [])]),
        "d": lambda v1: product([c(["V3"], ["V2", "V4"]), c(["V2", "V4"], ["V1"]).reduce({"V1": v1})]),
    }
    matched = {}
    for name, f in cases.items():
        hits = [
            i
            for i in range(len(cs))
            if all(np.allclose(f(v1).reorder(["V2", "V3", "V4"]).values, cs.tables[i, v1], atol=1e-9) for v1 in range(2))
        ]
        assert len(hits) == 1, name
        matched[name] = hits[0]
    assert sorted(matched.values()) == [0, 1, 2, 3]
    arrows = {name: set(cs.configs[i].arrows) for name, i in matched.items()}
    assert arrows["a"] == {("V2", "V1"), ("V4", "V1")}
    assert arrows["b"] == {("V1", "V2"), ("V4", "V1")}
    assert arrows["c"] == {("V2", "V1"), ("V1", "V4")}
    assert arrows["d"] == {("V1", "V2"), ("V1", "V4")}


def test_fully_oriented_cut_single_config():
    g = MixedGraph.from_edges("abc", [("a", "b")], [("b", "c")])
    g = apply_meek_rules(g)
    configs = enumerate_cut_configs(g, ["a"])
    assert len(configs) == 1 and configs[0][1] == g


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 5), st.integers(0, 10 ** 6))
def test_closures_are_valid_and_cover_mec(n, seed):
    rng = np.random.default_rng(seed)
    dag = random_dag(n, 0.6, rng)
    cp = cpdag_of(dag)
    s = [v for v in cp.vertices if rng.random() < 0.4] or [cp.vertices[0]]
    mec = enumerate_mec(cp)
    out = enumerate_cut_configs(cp, s)
    _, free = cut_edges(cp, s)
    assert 1 <= len(out) <= 2 ** len(free)
    hit = [0] * len(mec)
    for cfg, closure in out:
        assert is_consistent_with(closure, cp)
        assert is_valid_cpdag_shape(closure) or not closure.undirected
        members = [i for i, d in enumerate(mec) if set(cfg.arrows) <= d.directed]
        assert members
        for i in members:
            hit[i] += 1
    # every member of the class matches exactly one configuration
    assert hit == [1] * len(mec)


@pytest.mark.parametrize("seed", range(6))
def test_true_config_matches_truth(seed):
    rng = np.random.default_rng(seed)
    dag = random_chordal_dag(5, 0.6, rng)
    net = random_cpts(dag, 2, rng)
    cp = cpdag_of(dag)
    for s in graph_separating_system(cp).sets:
        cs = candidate_distributions(cp, s, joint(net))
        i = cs.index_of(dag.directed)
        for r, arm in enumerate(cs.arms):
            want = interventional_marginal(net, arm).reorder(cs.outcome_scope).values
            assert np.allclose(cs.tables[i, r], want, atol=1e-9)


@pytest.mark.parametrize("seed", range(6))
def test_candidates_pairwise_distinct(seed):
    rng = np.random.default_rng(100 + seed)
    dag = random_chordal_dag(5, 0.7, rng)
    net = random_cpts(dag, 2, rng)
    cp = cpdag_of(dag)
    for s in graph_separating_system(cp).sets:
        cs = candidate_distributions(cp, s, joint(net), diagnose=True)
        assert cs.min_separation() > 1e-9
        assert not cs.close_pairs()


def test_candidate_json(four_node_cpdag):
    cs = candidate_distributions(four_node_cpdag, ["V1"], four_node_obs())
    data = json.loads(cs.to_json())
    assert data["target"] == ["V1"] and len(data["configs"]) == 4
    assert set(data["configs"][0]["distributions"]) == {"V1=0", "V1=1"}
