"""Mixed graphs (DAG / PDAG / CPDAG / MPDAG) and the graph procedures built on them."""

from __future__ import annotations

import itertools
import logging
import random
import warnings
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

logger = logging.getLogger(__name__)

Node = Hashable

MEC_WARN_SIZE = 2 ** 20


class GraphError(ValueError):
    """Raised when a graph violates the structural precondition of an operation."""


def _pair(a, b) -> frozenset:
    return frozenset((a, b))


@dataclass(frozen=True)
class MixedGraph:
    """Vertex list plus directed and undirected edge sets.

    Immutable; adjacency caches are built once in ``__post_init__``.
    """

    vertices: tuple
    directed: frozenset = frozenset()
    undirected: frozenset = frozenset()
    _pa: dict = field(default=None, init=False, repr=False, compare=False, hash=False)
    _ch: dict = field(default=None, init=False, repr=False, compare=False, hash=False)
    _nb: dict = field(default=None, init=False, repr=False, compare=False, hash=False)
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        vertices = tuple(self.vertices)
        if len(set(vertices)) != len(vertices):
            raise GraphError("duplicate vertices")
        directed = frozenset((a, b) for a, b in self.directed)
        undirected = frozenset(_pair(*e) for e in self.undirected)
        vset = set(vertices)
        pa = {v: set() for v in vertices}
        ch = {v: set() for v in vertices}
        nb = {v: set() for v in vertices}
        for a, b in directed:
            if a == b:
                raise GraphError(f"self-loop at {a!r}")
            if a not in vset or b not in vset:
                raise GraphError(f"edge {a!r}->{b!r} has an endpoint outside the vertex set")
            if (b, a) in directed:
                raise GraphError(f"edge {a!r}-{b!r} is directed both ways")
            pa[b].add(a)
            ch[a].add(b)
        for e in undirected:
            if len(e) != 2:
                raise GraphError(f"malformed undirected edge {set(e)!r}")
            a, b = tuple(e)
            if a not in vset or b not in vset:
                raise GraphError(f"edge {a!r}--{b!r} has an endpoint outside the vertex set")
            if (a, b) in directed or (b, a) in directed:
                raise GraphError(f"pair {a!r},{b!r} is both directed and undirected")
            nb[a].add(b)
            nb[b].add(a)
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "directed", directed)
        object.__setattr__(self, "undirected", undirected)
        object.__setattr__(self, "_pa", {v: frozenset(s) for v, s in pa.items()})
        object.__setattr__(self, "_ch", {v: frozenset(s) for v, s in ch.items()})
        object.__setattr__(self, "_nb", {v: frozenset(s) for v, s in nb.items()})
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(vertices)})

    # -- construction ---------------------------------------------------------------

    @classmethod
    def from_edges(cls, vertices: Iterable, directed: Iterable = (), undirected: Iterable = ()) -> "MixedGraph":
        return cls(tuple(vertices), frozenset(directed), frozenset(_pair(*e) for e in undirected))

    def with_edges(self, directed: Iterable, undirected: Iterable) -> "MixedGraph":
        return MixedGraph(self.vertices, frozenset(directed), frozenset(_pair(*e) for e in undirected))

    def orient(self, a, b) -> "MixedGraph":
        """Return a copy with the undirected edge a--b replaced by a->b."""
        e = _pair(a, b)
        if e not in self.undirected:
            raise GraphError(f"{a!r}--{b!r} is not an undirected edge")
        return MixedGraph(self.vertices, self.directed | {(a, b)}, self.undirected - {e})

    def orient_many(self, arrows: Iterable) -> "MixedGraph":
        directed = set(self.directed)
        undirected = set(self.undirected)
        for a, b in arrows:
            if (a, b) in directed:
                continue
            e = _pair(a, b)
            if e not in undirected:
                raise GraphError(f"cannot orient {a!r}->{b!r}: not an undirected edge")
            undirected.discard(e)
            directed.add((a, b))
        return MixedGraph(self.vertices, frozenset(directed), frozenset(undirected))

    # -- queries --------------------------------------------------------------------

    def index(self, v) -> int:
        return self._index[v]

    def parents(self, v) -> frozenset:
        return self._pa[v]

    def children(self, v) -> frozenset:
        return self._ch[v]

    def neighbors(self, v) -> frozenset:
        """Undirected neighbours of ``v``."""
        return self._nb[v]

    def adjacent_to(self, v) -> frozenset:
        return self._pa[v] | self._ch[v] | self._nb[v]

    def adjacent(self, a, b) -> bool:
        return b in self._pa[a] or b in self._ch[a] or b in self._nb[a]

    def has_edge(self, a, b) -> bool:
        """True iff a->b is a directed edge."""
        return (a, b) in self.directed

    def edge_mark(self, a, b) -> str | None:
        """'->', '<-', '--' or None describing the edge between a and b."""
        if (a, b) in self.directed:
            return "->"
        if (b, a) in self.directed:
            return "<-"
        if _pair(a, b) in self.undirected:
            return "--"
        return None

    @property
    def is_dag(self) -> bool:
        return not self.undirected and self.topological_order() is not None

    def undirected_edges(self) -> list[tuple]:
        """Undirected edges as (a, b) pairs with a before b in vertex order, sorted."""
        out = []
        for e in self.undirected:
            a, b = sorted(e, key=self._index.__getitem__)
            out.append((a, b))
        out.sort(key=lambda p: (self._index[p[0]], self._index[p[1]]))
        return out

    def directed_edges(self) -> list[tuple]:
        return sorted(self.directed, key=lambda p: (self._index[p[0]], self._index[p[1]]))

    def skeleton(self) -> "MixedGraph":
        und = set(self.undirected) | {_pair(a, b) for a, b in self.directed}
        return MixedGraph(self.vertices, frozenset(), frozenset(und))

    def induced(self, nodes: Iterable) -> "MixedGraph":
        keep = set(nodes)
        verts = tuple(v for v in self.vertices if v in keep)
        return MixedGraph(
            verts,
            frozenset((a, b) for a, b in self.directed if a in keep and b in keep),
            frozenset(e for e in self.undirected if e <= keep),
        )

    def topological_order(self) -> list | None:
        """Topological order of the directed part (ties by vertex order); None if cyclic."""
        indeg = {v: len(self._pa[v]) for v in self.vertices}
        ready = [v for v in self.vertices if indeg[v] == 0]
        order = []
        while ready:
            ready.sort(key=self._index.__getitem__)
            v = ready.pop(0)
            order.append(v)
            for c in self._ch[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
        return order if len(order) == len(self.vertices) else None

    def ancestors(self, nodes: Iterable) -> set:
        """Vertices with a directed path into ``nodes`` (each node is its own ancestor)."""
        seen = set(nodes)
        stack = list(seen)
        while stack:
            v = stack.pop()
            for p in self._pa[v]:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def v_structures(self) -> frozenset:
        """Directed unshielded colliders a->c<-b, reported as (a, c, b) with a before b."""
        out = set()
        for c in self.vertices:
            pa = sorted(self._pa[c], key=self._index.__getitem__)
            for a, b in itertools.combinations(pa, 2):
                if not self.adjacent(a, b):
                    out.add((a, c, b))
        return frozenset(out)

    def chain_components(self) -> list[list]:
        """Connected components of the undirected part, in vertex order."""
        seen = set()
        comps = []
        for v in self.vertices:
            if v in seen:
                continue
            comp = []
            stack = [v]
            seen.add(v)
            while stack:
                u = stack.pop()
                comp.append(u)
                for w in self._nb[u]:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
            comp.sort(key=self._index.__getitem__)
            comps.append(comp)
        return comps

    def __str__(self) -> str:
        return to_edge_list(self)


# -- validators ------------------------------------------------------------------------


def has_directed_cycle(g: MixedGraph) -> bool:
    return g.topological_order() is None


def is_chain_graph(g: MixedGraph) -> bool:
    """No partially directed cycle: directed edges only between chain components, acyclically."""
    comp_of = {}
    comps = g.chain_components()
    for i, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = i
    arcs = set()
    for a, b in g.directed:
        ca, cb = comp_of[a], comp_of[b]
        if ca == cb:
            return False
        arcs.add((ca, cb))
    cg = MixedGraph(tuple(range(len(comps))), frozenset(arcs))
    return cg.topological_order() is not None


def is_valid_cpdag_shape(g: MixedGraph) -> bool:
    """Chain graph whose chain components are chordal."""
    if not is_chain_graph(g):
        return False
    return all(is_chordal(g.induced(comp)) for comp in g.chain_components() if len(comp) > 3)


def consistent_extension(g: MixedGraph) -> MixedGraph | None:
    """Dor-Tarsi extension of a PDAG to a DAG with the same skeleton and v-structures.

    Returns None when no such extension exists.
    """
    remaining = set(g.vertices)
    pa = {v: set(g.parents(v)) for v in g.vertices}
    ch = {v: set(g.children(v)) for v in g.vertices}
    nb = {v: set(g.neighbors(v)) for v in g.vertices}
    arcs = set(g.directed)
    while remaining:
        sink = None
        for x in g.vertices:
            if x not in remaining or ch[x]:
                continue
            adj_x = pa[x] | nb[x]
            if all(y == z or g.adjacent(y, z) for y in nb[x] for z in adj_x):
                sink = x
                break
        if sink is None:
            return None
        for y in nb[sink]:
            arcs.add((y, sink))
            nb[y].discard(sink)
        for p in pa[sink]:
            ch[p].discard(sink)
        remaining.discard(sink)
    return MixedGraph(g.vertices, frozenset(arcs))


def is_consistent_with(closure: MixedGraph, reference: MixedGraph) -> bool:
    """Whether ``closure`` (an orientation-refinement of ``reference``) still represents a DAG
    of ``reference``'s class: acyclic, no new unshielded collider, and Dor-Tarsi extendable."""
    if has_directed_cycle(closure):
        return False
    if closure.v_structures() != reference.v_structures():
        return False
    return consistent_extension(closure) is not None


# -- Meek rules ------------------------------------------------------------------------


def apply_meek_rules(g: MixedGraph, order_rng: random.Random | None = None) -> MixedGraph:
    """Close ``g`` under Meek rules R1-R4.

    Undirected edges are scanned repeatedly until a full pass orients nothing. ``order_rng``
    shuffles the scan order (the fixpoint does not depend on it for consistent inputs).
    """
    if has_directed_cycle(g):
        raise GraphError("directed part of the input is cyclic")
    pa = {v: set(g.parents(v)) for v in g.vertices}
    ch = {v: set(g.children(v)) for v in g.vertices}
    nb = {v: set(g.neighbors(v)) for v in g.vertices}

    def adj(a, b):
        return b in pa[a] or b in ch[a] or b in nb[a]

    def forced(a, b) -> bool:
        # R1: c -> a -- b, c and b nonadjacent
        for c in pa[a]:
            if not adj(c, b):
                return True
        # R2: a -> c -> b
        if ch[a] & pa[b]:
            return True
        # R3: a -- k -> b, a -- l -> b, k and l nonadjacent
        ks = nb[a] & pa[b]
        if len(ks) > 1:
            for k, l in itertools.combinations(ks, 2):
                if not adj(k, l):
                    return True
        # R4: a -- k, k -> l -> b, k and b nonadjacent
        for k in nb[a]:
            if k == b or adj(k, b):
                continue
            if ch[k] & pa[b]:
                return True
        return False

    changed = True
    while changed:
        changed = False
        edges = [(a, b) for a in g.vertices for b in nb[a] if g.index(a) < g.index(b)]
        if order_rng is not None:
            order_rng.shuffle(edges)
        for a, b in edges:
            if b not in nb[a]:
                continue
            for u, w in ((a, b), (b, a)) if order_rng is None or order_rng.random() < 0.5 else ((b, a), (a, b)):
                if forced(u, w):
                    nb[u].discard(w)
                    nb[w].discard(u)
                    ch[u].add(w)
                    pa[w].add(u)
                    changed = True
                    break
    arcs = {(p, v) for v in g.vertices for p in pa[v]}
    und = {_pair(a, b) for a in g.vertices for b in nb[a]}
    return MixedGraph(g.vertices, frozenset(arcs), frozenset(und))


def cpdag_of(dag: MixedGraph) -> MixedGraph:
    """CPDAG of a DAG: skeleton plus v-structures, closed under Meek rules."""
    if dag.undirected or has_directed_cycle(dag):
        raise GraphError("cpdag_of expects a DAG")
    arrows = set()
    for a, c, b in dag.v_structures():
        arrows.add((a, c))
        arrows.add((b, c))
    und = {_pair(a, b) for a, b in dag.directed if (a, b) not in arrows}
    return apply_meek_rules(MixedGraph(dag.vertices, frozenset(arrows), frozenset(und)))


def orientation_vector(dag: MixedGraph, reference: MixedGraph) -> tuple:
    """0/1 per undirected edge of ``reference`` (in canonical order): 0 if oriented forward."""
    return tuple(0 if dag.has_edge(a, b) else 1 for a, b in reference.undirected_edges())


class MecTooLarge(GraphError):
    pass


def enumerate_mec(cpdag: MixedGraph, limit: int | None = None) -> list[MixedGraph]:
    """All DAGs represented by a CPDAG (or MPDAG), sorted by orientation vector.

    Raises :class:`MecTooLarge` once more than ``limit`` members are found.
    """
    if not is_valid_cpdag_shape(cpdag):
        raise GraphError("input is not a chain graph with chordal chain components")
    if not is_consistent_with(cpdag, cpdag):
        raise GraphError("input represents no DAG")
    out = []

    def recurse(g: MixedGraph):
        if not g.undirected:
            out.append(g)
            if limit is not None and len(out) > limit:
                raise MecTooLarge(f"equivalence class has more than {limit} members")
            if len(out) == MEC_WARN_SIZE:
                warnings.warn(f"equivalence class exceeds {MEC_WARN_SIZE} members", RuntimeWarning)
            return
        a, b = g.undirected_edges()[0]
        for u, w in ((a, b), (b, a)):
            h = g.orient(u, w)
            if has_directed_cycle(h):
                continue
            h = apply_meek_rules(h)
            if is_consistent_with(h, cpdag):
                recurse(h)

    recurse(cpdag)
    out.sort(key=lambda d: orientation_vector(d, cpdag))
    return out


# -- partial causal ordering ------------------------------------------------------------


@dataclass(frozen=True)
class BucketOrdering:
    buckets: tuple  # tuple of frozensets, causal order first-to-last

    def __iter__(self):
        return iter(self.buckets)

    def __len__(self):
        return len(self.buckets)


def pco(m: MixedGraph, s: Iterable) -> BucketOrdering:
    """Partial causal ordering of ``s`` in the MPDAG ``m``.

    Buckets of the whole vertex set are peeled off as sinks (all cross edges pointing in);
    each peeled bucket intersected with ``s`` is prepended to the output.
    """
    s = set(s)
    missing = s - set(m.vertices)
    if missing:
        raise GraphError(f"nodes outside the graph: {sorted(map(str, missing))}")
    cc = [frozenset(c) for c in m.chain_components()]
    out = []
    while cc:
        for i, c in enumerate(cc):
            rest = set().union(*(cc[:i] + cc[i + 1:])) if len(cc) > 1 else set()
            if not any(w in rest for v in c for w in m.children(v)):
                break
        else:
            raise GraphError("no sink bucket: directed part is cyclic")
        cc.pop(i)
        part = s & c
        if part:
            out.insert(0, frozenset(part))
    return BucketOrdering(tuple(out))


# -- structural Hamming distance -----------------------------------------------------------


def shd(g1: MixedGraph, g2: MixedGraph) -> int:
    """Edge insertions + deletions + reversals (a reversal or mark change counts once)."""
    if set(g1.vertices) != set(g2.vertices):
        raise GraphError("graphs have different vertex sets")
    pairs = {_pair(a, b) for a, b in g1.directed} | set(g1.undirected)
    pairs |= {_pair(a, b) for a, b in g2.directed} | set(g2.undirected)
    dist = 0
    for e in pairs:
        a, b = tuple(e)
        if g1.edge_mark(a, b) != g2.edge_mark(a, b):
            dist += 1
    return dist


# -- chordality ---------------------------------------------------------------------------


def _undirected_adjacency(g: MixedGraph) -> dict:
    return {v: set(g.adjacent_to(v)) for v in g.vertices}


def mcs_order(g: MixedGraph) -> list:
    """Maximum-cardinality search visit order, ties broken by vertex order."""
    adj = _undirected_adjacency(g)
    weight = {v: 0 for v in g.vertices}
    order = []
    left = list(g.vertices)
    while left:
        v = max(left, key=lambda u: (weight[u], -g.index(u)))
        left.remove(v)
        order.append(v)
        for w in adj[v]:
            if w in weight and w in left:
                weight[w] += 1
    return order


def _is_peo(adj: dict, order: Sequence) -> bool:
    pos = {v: i for i, v in enumerate(order)}
    for v in order:
        later = [w for w in adj[v] if pos[w] > pos[v]]
        for a, b in itertools.combinations(later, 2):
            if b not in adj[a]:
                return False
    return True


def peo(g: MixedGraph) -> list | None:
    """A perfect elimination ordering of the skeleton (reverse MCS order), or None."""
    order = list(reversed(mcs_order(g)))
    return order if _is_peo(_undirected_adjacency(g), order) else None


def is_chordal(g: MixedGraph) -> bool:
    return peo(g) is not None


def chordalize(g: MixedGraph, order: Sequence) -> MixedGraph:
    """Eliminate vertices in ``order``, connecting the remaining neighbours of each one.

    Returns the undirected fill-in supergraph of the skeleton.
    """
    if set(order) != set(g.vertices) or len(order) != len(g.vertices):
        raise GraphError("elimination order must be a permutation of the vertices")
    adj = _undirected_adjacency(g)
    edges = {_pair(a, b) for a in adj for b in adj[a]}
    gone = set()
    for v in order:
        live = [w for w in adj[v] if w not in gone]
        for a, b in itertools.combinations(live, 2):
            if b not in adj[a]:
                adj[a].add(b)
                adj[b].add(a)
                edges.add(_pair(a, b))
        gone.add(v)
    return MixedGraph(g.vertices, frozenset(), frozenset(edges))


# -- edge-list text format -------------------------------------------------------------------


def to_edge_list(g: MixedGraph) -> str:
    lines = [str(v) for v in g.vertices]
    lines += [f"{a} -> {b}" for a, b in g.directed_edges()]
    lines += [f"{a} -- {b}" for a, b in g.undirected_edges()]
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> MixedGraph:
    """Parse ``a -> b`` / ``a -- b`` lines; a lone token declares a vertex; ``#`` comments."""
    vertices: list = []
    seen = set()
    directed, undirected = [], []

    def add(v):
        if v not in seen:
            seen.add(v)
            vertices.append(v)

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) == 1:
            add(parts[0])
        elif len(parts) == 3 and parts[1] in ("->", "--", "<-"):
            a, op, b = parts
            add(a)
            add(b)
            if op == "->":
                directed.append((a, b))
            elif op == "<-":
                directed.append((b, a))
            else:
                undirected.append((a, b))
        else:
            raise GraphError(f"line {lineno}: cannot parse {raw!r}")
    return MixedGraph.from_edges(vertices, directed, undirected)
