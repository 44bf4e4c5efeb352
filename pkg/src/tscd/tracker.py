"""Track-and-stop causal discovery (exact and practical variants)."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .effects import CandidateSet, CutConfig, candidate_distributions
from .graph import GraphError, MixedGraph, apply_meek_rules, enumerate_mec, has_directed_cycle, is_consistent_with, to_edge_list
from .hedge import AdaHedge
from .network import Factor, Intervention, kl_arrays
from .separating import TargetFamily

logger = logging.getLogger(__name__)

EPS_P = 1e-9
MEC_CAP = 4096
C_FLOOR = 1e-300


# -- threshold -------------------------------------------------------------------------


def log_threshold(x: float, t: int, n_actions: int, joint_size: int) -> float:
    """ln f_t(x) with f_t(x) = (x * ceil(x ln t + 1) * 2e / K)^K * e^(1 - x), K = n_actions (joint_size - 1)."""
    if not x > 0:
        raise ValueError("threshold_f needs x > 0")
    if t < 1:
        raise ValueError("threshold_f needs t >= 1")
    k = n_actions * (joint_size - 1)
    if k <= 0:
        raise ValueError("need at least one action and a nontrivial joint domain")
    if math.isinf(x):
        return -math.inf
    return k * math.log(x * math.ceil(x * math.log(t) + 1.0) * 2.0 * math.e / k) + 1.0 - x


def threshold_f(x: float, t: int, n_actions: int, joint_size: int) -> float:
    lf = log_threshold(x, t, n_actions, joint_size)
    return math.exp(lf) if lf < 700 else math.inf


def should_stop(d: float, t: int, n_actions: int, joint_size: int, delta: float) -> bool:
    """Stop once d >= K and f_t(d) < delta (always stop on d = inf)."""
    if math.isinf(d) and d > 0:
        return True
    k = n_actions * (joint_size - 1)
    if d < k or d <= 0 or t < 1:
        return False
    return log_threshold(d, t, n_actions, joint_size) < math.log(delta)


# -- hypotheses ------------------------------------------------------------------------


@dataclass
class Group:
    """Hypotheses that are compared over one block of arms.

    ``models[i]`` is an (H, J) array of outcome distributions for arm ``arms[i]``.
    """

    target: tuple | None
    arms: list
    labels: list
    models: list

    @property
    def size(self) -> int:
        return len(self.labels)


@dataclass
class Hypotheses:
    mode: str
    cpdag: MixedGraph
    arms: list
    arm_scopes: list
    groups: list
    candidates: dict
    joint_size: int
    d_cap: float
    eps_p: float = EPS_P
    dags: list = None
    dropped_targets: list = field(default_factory=list)

    @property
    def n_actions(self) -> int:
        return len(self.arms)


def build_hypotheses(
    cpdag: MixedGraph,
    obs: Factor,
    targets: TargetFamily | Sequence,
    mode: str = "practical",
    mec_cap: int = MEC_CAP,
    eps_p: float = EPS_P,
    d_cap: float | None = None,
) -> Hypotheses:
    """Precompute candidate distributions for every arm of every useful target set.

    Targets whose cut admits a single configuration carry no information and are left out
    of the action space.
    """
    if mode not in ("exact", "practical"):
        raise ValueError(f"unknown mode {mode!r}")
    sets = targets.sets if isinstance(targets, TargetFamily) else tuple(tuple(s) for s in targets)
    cards = dict(zip(obs.scope, obs.cards))
    candidates = {}
    dropped = []
    for s in sets:
        cset = candidate_distributions(cpdag, s, obs)
        if len(cset) == 0:
            raise GraphError(f"target {s}: no valid cut configuration")
        if len(cset) == 1:
            dropped.append(cset.target)
            continue
        candidates[cset.target] = cset
    arms, arm_scopes, arm_target = [], [], []
    for tgt, cset in candidates.items():
        for r, arm in enumerate(cset.arms):
            arms.append(arm)
            arm_scopes.append(cset.outcome_scope)
            arm_target.append((tgt, r))
    groups = []
    dags = None
    if mode == "practical":
        idx = 0
        for tgt, cset in candidates.items():
            n = len(cset.arms)
            groups.append(Group(tgt, list(range(idx, idx + n)), list(cset.configs), [cset.tables[:, r, :] for r in range(n)]))
            idx += n
    else:
        dags = enumerate_mec(cpdag, limit=mec_cap)
        if len(dags) > 1 and arms:
            cfg_index = {tgt: [cset.index_of(d.directed) for d in dags] for tgt, cset in candidates.items()}
            models = []
            for tgt, r in arm_target:
                models.append(candidates[tgt].tables[cfg_index[tgt], r, :])
            groups.append(Group(None, list(range(len(arms))), list(dags), models))
    if d_cap is None:
        d_cap = 0.0
        for cset in candidates.values():
            for r in range(len(cset.arms)):
                rows = np.maximum(cset.tables[:, r, :], eps_p)
                for i in range(len(cset)):
                    for j in range(len(cset)):
                        if i != j:
                            d_cap = max(d_cap, kl_arrays(cset.tables[i, r, :], rows[j]))
        if d_cap == 0.0:
            d_cap = 1.0
    return Hypotheses(
        mode=mode,
        cpdag=cpdag,
        arms=arms,
        arm_scopes=arm_scopes,
        groups=groups,
        candidates=candidates,
        joint_size=math.prod(cards[v] for v in cpdag.vertices),
        d_cap=float(d_cap),
        eps_p=eps_p,
        dags=dags,
        dropped_targets=dropped,
    )


# -- per-round state -------------------------------------------------------------------


class _GroupState:
    __slots__ = ("g", "arms", "logq", "zero", "has_zero", "cross", "negent", "kl", "nkl", "G", "Z", "hedge", "reward_sum", "local")

    def __init__(self, g: Group, eps_p: float):
        self.g = g
        self.arms = list(g.arms)
        self.local = {a: i for i, a in enumerate(g.arms)}
        self.logq = [np.log(np.maximum(m, eps_p)) for m in g.models]
        self.zero = [(m <= 0) for m in g.models]
        self.has_zero = any(z.any() for z in self.zero)
        n, h = len(g.arms), g.size
        self.cross = np.zeros((n, h))
        self.negent = np.zeros(n)
        self.kl = np.zeros((n, h))  # per-arm empirical KL to each hypothesis
        self.nkl = np.zeros((n, h))  # the same scaled by the arm count
        self.G = np.zeros(h)  # sum over arms of N * KL
        self.Z = np.zeros(h, dtype=np.int64)  # observations a hypothesis deems impossible
        self.hedge = AdaHedge(n)
        self.reward_sum = 0.0

    def best(self) -> int:
        if self.has_zero and self.Z.any():
            key = np.lexsort((np.arange(self.G.size), self.G, self.Z))
            return int(key[0])
        return int(np.argmin(self.G))


class TrackerState:
    """Counts, empirical statistics and allocation state of one run."""

    def __init__(self, hyp: Hypotheses):
        self.hyp = hyp
        n = hyp.n_actions
        self.t = 0
        self.N = np.zeros(n, dtype=np.int64)
        self.Nv = [np.zeros(len(m), dtype=np.int64) for m in self._outcome_sizes()]
        self.A = np.zeros(n)  # cumulative allocation sum_i alpha_{s,i}
        self.alpha = np.full(n, 1.0 / n) if n else np.zeros(0)
        self.groups = [_GroupState(g, hyp.eps_p) for g in hyp.groups]
        self.arm_group = {}
        for gi, gs in enumerate(self.groups):
            for a in gs.arms:
                self.arm_group.setdefault(a, []).append(gi)
        self.rounds_allocated = 0

    def _outcome_sizes(self):
        out = []
        for a in range(self.hyp.n_actions):
            for g in self.hyp.groups:
                if a in g.arms:
                    out.append(np.zeros(g.models[g.arms.index(a)].shape[1]))
                    break
            else:
                out.append(np.zeros(1))
        return out

    def observe(self, arm: int, outcome: int) -> None:
        self.t += 1
        self.N[arm] += 1
        nv = self.Nv[arm]
        nv[outcome] += 1
        n_arm = self.N[arm]
        pos = nv[nv > 0]
        negent = float(pos @ np.log(pos / n_arm))
        for gi in self.arm_group.get(arm, ()):
            gs = self.groups[gi]
            i = gs.local[arm]
            gs.cross[i] += gs.logq[i][:, outcome]
            if gs.has_zero:
                gs.Z += gs.zero[i][:, outcome]
            gs.negent[i] = negent
            nkl = negent - gs.cross[i]
            gs.G += nkl - gs.nkl[i]
            gs.nkl[i] = nkl
            gs.kl[i] = np.maximum(nkl / n_arm, 0.0)

    def empirical(self, arm: int) -> np.ndarray:
        n = self.N[arm]
        return self.Nv[arm] / n if n else self.Nv[arm].astype(float)


def most_probable(state: TrackerState) -> list[int]:
    """Index of the most probable hypothesis in each group (lowest index wins ties)."""
    return [gs.best() for gs in state.groups]


def stopping_statistic(state: TrackerState, best: Sequence[int] | None = None) -> float:
    """min over alternatives of the total empirical-to-model information (inf with no alternatives)."""
    if not state.groups:
        return math.inf
    if state.t == 0:
        return 0.0
    if best is None:
        best = most_probable(state)
    base = 0.0
    gap = math.inf
    for gs, b in zip(state.groups, best):
        gb = gs.G[b]
        base += gb
        if gs.G.size > 1:
            rest = np.delete(gs.G, b)
            gap = min(gap, float(rest.min()) - gb)
    d = max(0.0, base + gap)
    return d


def compute_allocation(state: TrackerState, best: Sequence[int] | None = None) -> np.ndarray:
    """One hedge update per group from the current empirical KLs; returns alpha over all arms."""
    hyp = state.hyp
    if best is None:
        best = most_probable(state)
    cap = hyp.d_cap
    n = hyp.n_actions
    if not state.groups:
        return np.zeros(n)
    h_vals = []
    for gs, b in zip(state.groups, best):
        w = gs.hedge.w
        score = w @ gs.kl
        score[b] = math.inf
        alt = int(np.argmin(score))
        r = np.minimum(gs.kl[:, alt], cap)
        h_vals.append(gs.hedge.update(r))
        gs.reward_sum += h_vals[-1]
    state.rounds_allocated += 1
    if len(state.groups) == 1:
        gs = state.groups[0]
        alpha = np.zeros(n)
        alpha[gs.arms] = gs.hedge.w
        return alpha
    c = np.array([gs.reward_sum for gs in state.groups])
    gamma = 1.0 / np.maximum(c, C_FLOOR)
    gamma /= gamma.sum()
    alpha = np.zeros(n)
    for gs, gm in zip(state.groups, gamma):
        alpha[gs.arms] = gm * gs.hedge.w
    return alpha


def select_intervention(state: TrackerState) -> int:
    """Forced exploration below sqrt(t), otherwise the arm lagging furthest behind its allocation."""
    n = state.N
    t = state.t
    lo = int(np.argmin(n))
    if n[lo] < math.sqrt(t):
        return lo
    return int(np.argmax(state.A / n))


# -- environment -----------------------------------------------------------------------


class NetworkOracle:
    """Samples outcomes of each arm from a hidden network (precomputed CDFs)."""

    def __init__(self, net, arms: Sequence[Intervention], scopes: Sequence[tuple]):
        from .network import interventional

        self.cdfs = []
        cache = {}
        for arm, scope in zip(arms, scopes):
            key = (arm, scope)
            if key not in cache:
                p = interventional(net, arm).marginal(scope).values
                cdf = np.cumsum(p)
                cdf[-1] = 1.0
                cache[key] = cdf
            self.cdfs.append(cache[key])

    def sample(self, arm: int, rng: np.random.Generator) -> int:
        cdf = self.cdfs[arm]
        return int(min(np.searchsorted(cdf, rng.random(), side="right"), cdf.size - 1))


# -- driver ----------------------------------------------------------------------------


@dataclass
class DiscoveryResult:
    mode: str
    terminated: bool
    stopping_time: int
    final_d: float
    chosen: list
    graph: MixedGraph
    realizable: bool
    arm_trace: np.ndarray
    d_trace: np.ndarray
    best_events: list
    arms: list
    tracking_violations: int = 0
    exploration_violations: int = 0
    dropped_targets: list = field(default_factory=list)

    @property
    def inconclusive(self) -> bool:
        return not self.terminated

    def to_json(self, trace: bool = True) -> str:
        out = {
            "mode": self.mode,
            "terminated": self.terminated,
            "inconclusive": self.inconclusive,
            "stopping_time": self.stopping_time,
            "final_d": None if math.isinf(self.final_d) else self.final_d,
            "realizable": self.realizable,
            "graph": to_edge_list(self.graph).splitlines(),
            "chosen": [c.as_dict() if isinstance(c, CutConfig) else to_edge_list(c).splitlines() for c in self.chosen],
            "dropped_targets": [[str(v) for v in t] for t in self.dropped_targets],
        }
        if trace:
            out["trace"] = {
                "arm": [self.arms[a].label() for a in self.arm_trace.tolist()],
                "d": [None if math.isinf(x) else x for x in self.d_trace.tolist()],
            }
        return json.dumps(out, indent=2)


def combine(cpdag: MixedGraph, arrows: Sequence) -> tuple[MixedGraph, bool]:
    """Orient ``cpdag`` with ``arrows`` (first wins on conflict) and close under Meek rules.

    Returns the graph and whether it is a consistent member-representing graph.
    """
    directed = set(cpdag.directed)
    undirected = set(cpdag.undirected)
    ok = True
    for a, b in arrows:
        if (a, b) in directed:
            continue
        e = frozenset((a, b))
        if e in undirected:
            undirected.discard(e)
            directed.add((a, b))
        else:
            ok = False
    g = MixedGraph(cpdag.vertices, frozenset(directed), frozenset(undirected))
    if has_directed_cycle(g):
        return g, False
    g = apply_meek_rules(g)
    return g, ok and is_consistent_with(g, cpdag)


def estimate_graph(hyp: Hypotheses, best: Sequence[int]) -> tuple[MixedGraph, bool]:
    if hyp.mode == "exact":
        if not hyp.groups:
            g = hyp.dags[0] if hyp.dags and len(hyp.dags) == 1 else hyp.cpdag
            return g, True
        return hyp.groups[0].labels[best[0]], True
    arrows = [a for gs, b in zip(hyp.groups, best) for a in gs.labels[b].arrows]
    return combine(hyp.cpdag, arrows)


def run(
    env,
    hyp: Hypotheses,
    delta: float,
    rng: np.random.Generator,
    max_samples: int = 10 ** 6,
    check_tracking: bool = False,
    engine: str = "compiled",
) -> DiscoveryResult:
    """Run Algorithm 1 until the stopping rule fires or ``max_samples`` samples are taken.

    ``engine="reference"`` runs the plain numpy loop; ``"compiled"`` runs the JIT kernel,
    which takes identical decisions and consumes one uniform draw per sample in the same
    order. Environments without precomputed CDFs always use the reference loop.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if engine not in ("compiled", "reference"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "compiled" and hasattr(env, "cdfs") and hyp.groups:
        return _run_compiled(env, hyp, delta, rng, max_samples, check_tracking)
    return _run_reference(env, hyp, delta, rng, max_samples, check_tracking)


def _finish(hyp, terminated, t, d, best, arm_trace, d_trace, events, track_viol, explore_viol):
    graph, realizable = estimate_graph(hyp, best)
    chosen = [g.labels[b] for g, b in zip(hyp.groups, best)]
    return DiscoveryResult(
        mode=hyp.mode,
        terminated=terminated,
        stopping_time=t,
        final_d=d,
        chosen=chosen,
        graph=graph,
        realizable=realizable,
        arm_trace=np.asarray(arm_trace, dtype=np.int64),
        d_trace=np.asarray(d_trace, dtype=float),
        best_events=events,
        arms=list(hyp.arms),
        tracking_violations=track_viol,
        exploration_violations=explore_viol,
        dropped_targets=list(hyp.dropped_targets),
    )


def _run_reference(env, hyp, delta, rng, max_samples, check_tracking) -> DiscoveryResult:
    st = TrackerState(hyp)
    n = hyp.n_actions
    K = hyp.joint_size
    log_delta = math.log(delta)
    k_threshold = n * (K - 1)
    arm_trace = []
    d_trace = []
    events = []
    last_best = None
    track_viol = 0
    explore_viol = 0
    d = math.inf if not st.groups else 0.0
    best = most_probable(st)

    def record(arm):
        nonlocal best, last_best, d
        best = most_probable(st)
        d = stopping_statistic(st, best)
        arm_trace.append(arm)
        d_trace.append(d)
        tb = tuple(best)
        if tb != last_best:
            events.append((st.t, tb))
            last_best = tb

    events.append((0, tuple(best)))
    last_best = tuple(best)
    terminated = False
    # initial sweep: uniform allocation while each arm is taken once
    for arm in range(n):
        if st.t >= max_samples:
            break
        st.A += 1.0 / n
        st.observe(arm, env.sample(arm, rng))
        record(arm)
    sqrt = math.sqrt
    if n and st.t == n:
        while True:
            t = st.t
            if d == math.inf or (d >= k_threshold and log_threshold(d, t, n, K) < log_delta):
                terminated = True
                break
            if t >= max_samples:
                break
            alpha = compute_allocation(st, best)
            st.A += alpha
            arm = select_intervention(st)
            st.observe(arm, env.sample(arm, rng))
            if check_tracking:
                t1 = st.t
                root = sqrt(t1)
                lo = st.A - (n - 1) * (root + 2.0)
                hi = np.maximum(1.0 + st.A, root + 1.0)
                track_viol += int(np.sum((st.N < lo - 1e-9) | (st.N > hi + 1e-9)))
                if st.N.min() < math.floor(root) - n:
                    explore_viol += 1
            record(arm)
    elif n == 0:
        terminated = True
    return _finish(hyp, terminated, st.t, d, best, arm_trace, d_trace, events, track_viol, explore_viol)


CHUNK = 1 << 16


def _pack(hyp: Hypotheses) -> dict:
    """Padded arrays describing the hypotheses, cached on ``hyp``."""
    cached = getattr(hyp, "_packed", None)
    if cached is not None:
        return cached
    n = hyp.n_actions
    n_groups = len(hyp.groups)
    max_h = max((g.size for g in hyp.groups), default=1)
    sizes = [0] * n
    for g in hyp.groups:
        for i, a in enumerate(g.arms):
            sizes[a] = g.models[i].shape[1]
    max_j = max(sizes, default=1)
    logq = np.zeros((n, max_h, max_j))
    zero = np.zeros((n, max_h, max_j), dtype=np.bool_)
    arm_group = np.zeros(n, dtype=np.int64)
    arm_local = np.zeros(n, dtype=np.int64)
    gstart = np.zeros(n_groups + 1, dtype=np.int64)
    H = np.array([g.size for g in hyp.groups], dtype=np.int64)
    has_zero = np.zeros(n_groups, dtype=np.bool_)
    log_k = np.zeros(n_groups)
    for gi, g in enumerate(hyp.groups):
        if g.arms != list(range(g.arms[0], g.arms[0] + len(g.arms))):
            raise ValueError("compiled engine needs contiguous arm blocks per group")
        gstart[gi] = g.arms[0]
        gstart[gi + 1] = g.arms[-1] + 1
        log_k[gi] = math.log(len(g.arms)) if len(g.arms) > 1 else 0.0
        for i, a in enumerate(g.arms):
            m = g.models[i]
            logq[a, : m.shape[0], : m.shape[1]] = np.log(np.maximum(m, hyp.eps_p))
            zero[a, : m.shape[0], : m.shape[1]] = m <= 0
            has_zero[gi] |= bool((m <= 0).any())
            arm_group[a] = gi
            arm_local[a] = i
    packed = dict(
        logq=logq, zero=zero, arm_group=arm_group, arm_local=arm_local, gstart=gstart, H=H,
        has_zero=has_zero, log_k=log_k, sizes=np.array(sizes, dtype=np.int64), max_h=max_h, max_j=max_j,
    )
    hyp._packed = packed
    return packed


def _run_compiled(env, hyp, delta, rng, max_samples, check_tracking) -> DiscoveryResult:
    from . import _kernel

    pk = _pack(hyp)
    n = hyp.n_actions
    n_groups = len(hyp.groups)
    max_h, max_j = pk["max_h"], pk["max_j"]
    cdf = np.ones((n, max_j))
    for a, c in enumerate(env.cdfs):
        if c.size != pk["sizes"][a]:
            raise ValueError("environment outcome space does not match the hypotheses")
        cdf[a, : c.size] = c
    N = np.zeros(n, dtype=np.int64)
    Nv = np.zeros((n, max_j), dtype=np.int64)
    cross = np.zeros((n, max_h))
    nkl = np.zeros((n, max_h))
    kl = np.zeros((n, max_h))
    G = np.zeros((max(n_groups, 1), max_h))
    Z = np.zeros((max(n_groups, 1), max_h), dtype=np.int64)
    gains = np.zeros(n)
    gap = np.zeros(max(n_groups, 1))
    w = np.zeros(n)
    for g in hyp.groups:
        w[g.arms] = 1.0 / len(g.arms)
    rsum = np.zeros(max(n_groups, 1))
    A = np.zeros(n)
    best = np.zeros(max(n_groups, 1), dtype=np.int64)
    scalars = np.array([0.0, math.inf if n_groups == 0 else 0.0])
    viol = np.zeros(2, dtype=np.int64)
    k_threshold = float(n * (hyp.joint_size - 1))
    arms_out, d_out, best_out = [], [], []
    status = _kernel.STATUS_NEED_INPUT
    while status == _kernel.STATUS_NEED_INPUT:
        t = int(scalars[0])
        size = int(min(CHUNK, max(max_samples - t, 0)))
        u = rng.random(size) if size else np.zeros(0)
        oa = np.zeros(size, dtype=np.int64)
        od = np.zeros(size)
        ob = np.zeros((size, max(n_groups, 1)), dtype=np.int64)
        status, pos = _kernel.run_chunk(
            u, cdf, pk["sizes"], pk["logq"], pk["zero"], pk["arm_group"], pk["arm_local"], pk["gstart"],
            pk["H"], pk["has_zero"], pk["log_k"], float(hyp.d_cap), k_threshold, hyp.joint_size,
            math.log(delta), int(max_samples), bool(check_tracking),
            N, Nv, cross, nkl, kl, G, Z, gains, gap, w, rsum, A, best, scalars, viol, oa, od, ob,
        )
        arms_out.append(oa[:pos])
        d_out.append(od[:pos])
        best_out.append(ob[:pos, :n_groups])
        if status == _kernel.STATUS_NEED_INPUT and pos < size:
            raise RuntimeError("kernel returned early without a stopping reason")
        if size == 0 and status == _kernel.STATUS_NEED_INPUT:
            status = _kernel.STATUS_CAPPED
    arm_trace = np.concatenate(arms_out) if arms_out else np.zeros(0, dtype=np.int64)
    d_trace = np.concatenate(d_out) if d_out else np.zeros(0)
    bests = np.concatenate(best_out) if best_out else np.zeros((0, n_groups), dtype=np.int64)
    events = [(0, tuple([0] * n_groups))]
    if len(bests):
        change = np.flatnonzero(np.any(bests[1:] != bests[:-1], axis=1)) + 1
        idx = [0] + change.tolist()
        for i in idx:
            tb = tuple(int(x) for x in bests[i])
            if tb != events[-1][1]:
                events.append((i + 1, tb))
    final_best = [int(x) for x in best[:n_groups]]
    return _finish(
        hyp, status == _kernel.STATUS_STOPPED, int(scalars[0]), float(scalars[1]), final_best,
        arm_trace, d_trace, events, int(viol[0]), int(viol[1]),
    )
