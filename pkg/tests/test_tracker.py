import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tscd.generate import random_chordal_dag, random_cpts
from tscd.graph import MixedGraph, cpdag_of, shd
from tscd.network import DiscreteNet, Intervention, joint, kl_arrays
from tscd.separating import graph_separating_system
from tscd.tracker import (
    Group,
    Hypotheses,
    NetworkOracle,
    TrackerState,
    build_hypotheses,
    compute_allocation,
    log_threshold,
    most_probable,
    run,
    select_intervention,
    should_stop,
    stopping_statistic,
    threshold_f,
)


def toy_hyp(models_per_arm, labels=None):
    """Single group over the given arms; models_per_arm[i] is an (H, J) array."""
    n = len(models_per_arm)
    h = models_per_arm[0].shape[0]
    arms = [Intervention((f"A{i}",), (0,)) for i in range(n)]
    g = Group(None, list(range(n)), labels or [f"h{j}" for j in range(h)], [np.asarray(m, float) for m in models_per_arm])
    return Hypotheses("exact", None, arms, [()] * n, [g], {}, joint_size=2, d_cap=1.0)


def test_threshold_example():
    # K = 2 actions * (2 - 1)
    assert threshold_f(5, 100, 2, 2) == pytest.approx(15625 * math.exp(-2), rel=1e-12)
    assert threshold_f(5, 100, 2, 2) == pytest.approx(2114.6, abs=0.05)


def test_threshold_decays():
    xs = np.linspace(200, 2000, 200)
    vals = [log_threshold(x, 1000, 3, 4) for x in xs]
    assert all(b <= a for a, b in zip(vals, vals[1:]))
    assert threshold_f(5000, 1000, 3, 4) < 1e-100


def test_threshold_errors():
    with pytest.raises(ValueError):
        threshold_f(0, 10, 1, 2)
    with pytest.raises(ValueError):
        threshold_f(1, 0, 1, 2)


def test_should_stop_rules():
    assert should_stop(math.inf, 1, 3, 4, 0.1)
    # below the validity region the rule never fires
    assert not should_stop(8.9, 10 ** 6, 3, 4, 0.1)
    assert should_stop(200, 1000, 3, 4, 0.1)
    assert not should_stop(0, 1000, 3, 4, 0.1)


def test_stopping_statistic_example():
    hyp = toy_hyp([np.array([[0.7, 0.3], [0.3, 0.7]])])
    st_ = TrackerState(hyp)
    assert stopping_statistic(st_) == 0.0
    for o in [0] * 7 + [1] * 3:
        st_.observe(0, o)
    assert most_probable(st_) == [0]
    # 10 * kl((0.7, 0.3), (0.3, 0.7)) = 4 ln(7/3)
    d = stopping_statistic(st_)
    assert d == pytest.approx(4 * math.log(7 / 3), abs=1e-12)
    assert d == pytest.approx(3.38919, abs=1e-5)


def test_most_probable_ties_and_zeros():
    hyp = toy_hyp([np.array([[0.5, 0.5], [0.5, 0.5], [1.0, 0.0]])])
    st_ = TrackerState(hyp)
    assert most_probable(st_) == [0]
    for _ in range(20):
        st_.observe(0, 0)
    # h2 explains the data best by likelihood, and is never beaten by h0/h1
    assert most_probable(st_) == [2]
    st_.observe(0, 1)
    # h2 gives probability 0 to outcome 1, so it is ruled out
    assert most_probable(st_) == [0]


def test_d_scales_with_counts():
    hyp = toy_hyp([np.array([[0.6, 0.4], [0.2, 0.8]])])
    a, b = TrackerState(hyp), TrackerState(hyp)
    for o in [0, 0, 1]:
        a.observe(0, o)
    for o in [0, 0, 1] * 2:
        b.observe(0, o)
    assert stopping_statistic(b) == pytest.approx(2 * stopping_statistic(a))


def test_select_forced_exploration():
    hyp = toy_hyp([np.array([[0.5, 0.5], [0.4, 0.6]])] * 3)
    st_ = TrackerState(hyp)
    for arm, n in enumerate([4, 2, 3]):
        for _ in range(n):
            st_.observe(arm, 0)
    assert st_.t == 9
    assert select_intervention(st_) == 1


def test_select_tie_first_arm():
    hyp = toy_hyp([np.array([[0.5, 0.5], [0.4, 0.6]])] * 3)
    st_ = TrackerState(hyp)
    for arm in range(3):
        st_.observe(arm, 0)
    st_.A[:] = 1.0
    assert select_intervention(st_) == 0


def test_allocation_in_simplex():
    hyp = toy_hyp([np.array([[0.5, 0.5], [0.4, 0.6]]), np.array([[0.9, 0.1], [0.1, 0.9]])])
    st_ = TrackerState(hyp)
    rng = np.random.default_rng(0)
    for _ in range(50):
        st_.observe(int(rng.integers(2)), int(rng.integers(2)))
        a = compute_allocation(st_)
        assert abs(a.sum() - 1) < 1e-12 and (a >= 0).all()


def test_global_weights_favour_hard_target():
    easy = np.array([[0.95, 0.05], [0.05, 0.95]])
    hard = np.array([[0.52, 0.48], [0.48, 0.52]])
    arms = [Intervention(("E",), (0,)), Intervention(("H",), (0,))]
    groups = [Group(("E",), [0], ["e0", "e1"], [easy]), Group(("H",), [1], ["h0", "h1"], [hard])]
    hyp = Hypotheses("practical", None, arms, [(), ()], groups, {}, joint_size=2, d_cap=10.0)
    st_ = TrackerState(hyp)
    rng = np.random.default_rng(1)
    for _ in range(200):
        st_.observe(0, int(rng.random() < 0.05))
        st_.observe(1, int(rng.random() < 0.48))
    alpha = compute_allocation(st_)
    assert alpha[1] > alpha[0]


def chain_net():
    g = MixedGraph.from_edges(["A", "B", "C"], [("A", "B"), ("B", "C")])
    strong = [[0.9, 0.1], [0.1, 0.9]]
    return DiscreteNet(g, {v: 2 for v in "ABC"}, {"A": [0.5, 0.5], "B": strong, "C": strong})


@pytest.mark.parametrize("mode", ["exact", "practical"])
def test_chain_end_to_end(mode):
    net = chain_net()
    cp = cpdag_of(net.graph)
    hyp = build_hypotheses(cp, joint(net), graph_separating_system(cp), mode)
    env = NetworkOracle(net, hyp.arms, hyp.arm_scopes)
    res = run(env, hyp, 0.1, np.random.default_rng(0), max_samples=10 ** 6, check_tracking=True)
    assert res.terminated and res.stopping_time >= hyp.n_actions
    assert shd(res.graph, net.graph) == 0 and res.realizable
    assert len(res.arm_trace) == res.stopping_time == len(res.d_trace)
    assert res.tracking_violations == 0 and res.exploration_violations == 0


def test_single_member_class_stops_immediately():
    g = MixedGraph.from_edges(["A", "B", "C"], [("A", "C"), ("B", "C")])
    rng = np.random.default_rng(0)
    net = random_cpts(g, 2, rng)
    cp = cpdag_of(g)
    hyp = build_hypotheses(cp, joint(net), [("C",)], "practical")
    assert hyp.n_actions == 0 and hyp.dropped_targets == [("C",)]
    res = run(NetworkOracle(net, hyp.arms, hyp.arm_scopes), hyp, 0.1, rng)
    assert res.terminated and res.stopping_time == 0 and math.isinf(res.final_d)
    assert shd(res.graph, g) == 0


def test_delta_range():
    net = chain_net()
    cp = cpdag_of(net.graph)
    hyp = build_hypotheses(cp, joint(net), graph_separating_system(cp))
    with pytest.raises(ValueError):
        run(NetworkOracle(net, hyp.arms, hyp.arm_scopes), hyp, 1.5, np.random.default_rng(0))


def test_cap_flags_inconclusive():
    net = chain_net()
    cp = cpdag_of(net.graph)
    hyp = build_hypotheses(cp, joint(net), graph_separating_system(cp))
    res = run(NetworkOracle(net, hyp.arms, hyp.arm_scopes), hyp, 0.1, np.random.default_rng(0), max_samples=50)
    assert res.inconclusive and res.stopping_time == 50


def instance(seed, n=4, rho=0.5):
    rng = np.random.default_rng(seed)
    dag = random_chordal_dag(n, rho, rng)
    net = random_cpts(dag, 2, rng)
    cp = cpdag_of(dag)
    return dag, net, cp, graph_separating_system(cp)


@pytest.mark.parametrize("mode", ["exact", "practical"])
@pytest.mark.parametrize("seed", range(4))
def test_engines_agree(mode, seed):
    dag, net, cp, fam = instance(seed)
    hyp = build_hypotheses(cp, joint(net), fam, mode)
    env = NetworkOracle(net, hyp.arms, hyp.arm_scopes)
    a = run(env, hyp, 0.2, np.random.default_rng(seed), max_samples=3000, check_tracking=True, engine="reference")
    b = run(env, hyp, 0.2, np.random.default_rng(seed), max_samples=3000, check_tracking=True, engine="compiled")
    assert np.array_equal(a.arm_trace, b.arm_trace)
    assert np.allclose(a.d_trace, b.d_trace, rtol=1e-9, atol=1e-9)
    assert a.best_events == b.best_events
    assert (a.stopping_time, a.terminated, a.graph) == (b.stopping_time, b.terminated, b.graph)
    assert a.tracking_violations == b.tracking_violations == 0


def test_replay_reproduces_stop():
    net = chain_net()
    cp = cpdag_of(net.graph)
    hyp = build_hypotheses(cp, joint(net), graph_separating_system(cp))
    res = run(NetworkOracle(net, hyp.arms, hyp.arm_scopes), hyp, 0.1, np.random.default_rng(3))
    n = hyp.n_actions
    stops = [t for t, d in enumerate(res.d_trace, start=1) if t >= n and should_stop(d, t, n, hyp.joint_size, 0.1)]
    assert stops and stops[0] == res.stopping_time


def test_exact_models_agree_with_candidates():
    dag, net, cp, fam = instance(2, n=5, rho=0.7)
    hyp = build_hypotheses(cp, joint(net), fam, "exact")
    g = hyp.groups[0]
    offset = 0
    for tgt, cs in hyp.candidates.items():
        for r in range(len(cs.arms)):
            for h, d in enumerate(g.labels):
                assert np.array_equal(g.models[offset + r][h], cs.tables[cs.index_of(d.directed), r])
        offset += len(cs.arms)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_tracking_bounds_random(seed):
    dag, net, cp, fam = instance(seed)
    hyp = build_hypotheses(cp, joint(net), fam, "practical")
    if not hyp.n_actions:
        return
    res = run(NetworkOracle(net, hyp.arms, hyp.arm_scopes), hyp, 0.2, np.random.default_rng(seed), max_samples=2000, check_tracking=True)
    assert res.tracking_violations == 0 and res.exploration_violations == 0
    assert (res.d_trace >= 0).all()


def test_result_json():
    net = chain_net()
    cp = cpdag_of(net.graph)
    hyp = build_hypotheses(cp, joint(net), graph_separating_system(cp))
    res = run(NetworkOracle(net, hyp.arms, hyp.arm_scopes), hyp, 0.1, np.random.default_rng(0), max_samples=100)
    data = json.loads(res.to_json())
    assert data["stopping_time"] == 100 and len(data["trace"]["arm"]) == 100
    assert data["inconclusive"] is True
