"""Reader and canonical writer for the discrete subset of the BIF network format."""

from __future__ import annotations

import itertools
import re

import numpy as np

from .graph import GraphError, MixedGraph
from .network import DiscreteNet, NetworkError

BIF_ROW_TOL = 1e-6

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>//[^\n]*|/\*.*?\*/)
  | (?P<number>[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?(?![A-Za-z_]))
  | (?P<word>[A-Za-z_][A-Za-z0-9_.\-]*|"[^"]*")
  | (?P<punct>[{}()\[\];,|])
    """,
    re.VERBOSE | re.DOTALL,
)


class BifSyntaxError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"line {line}, column {col}: {msg}")
        self.line = line
        self.col = col


class BifSemanticError(ValueError):
    pass


def _tokenize(text: str) -> list[tuple[str, str, int, int]]:
    out = []
    pos = 0
    line, line_start = 1, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise BifSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "comment"):
            if kind == "word" and value.startswith('"'):
                value = value[1:-1]
            out.append((kind, value, line, pos - line_start + 1))
        nl = value.count("\n") if kind in ("ws", "comment") else 0
        if nl:
            line += nl
            line_start = pos + m.group().rfind("\n") + 1
        pos = m.end()
    return out


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def _where(self):
        if self.i < len(self.toks):
            return self.toks[self.i][2], self.toks[self.i][3]
        if self.toks:
            return self.toks[-1][2], self.toks[-1][3] + len(self.toks[-1][1])
        return 1, 1

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def fail(self, msg):
        raise BifSyntaxError(msg, *self._where())

    def take(self, kind=None, value=None):
        tok = self.peek()
        if tok is None:
            self.fail(f"unexpected end of input, expected {value or kind}")
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            self.fail(f"expected {value or kind}, found {tok[1]!r}")
        self.i += 1
        return tok[1]

    def at(self, value) -> bool:
        tok = self.peek()
        return tok is not None and tok[1] == value

    def skip_block_or_stmt(self):
        # property lines and unknown statements: skip to ';' (or a balanced block)
        depth = 0
        while True:
            tok = self.peek()
            if tok is None:
                self.fail("unterminated statement")
            self.i += 1
            if tok[1] == "{":
                depth += 1
            elif tok[1] == "}":
                depth -= 1
                if depth == 0:
                    return
            elif tok[1] == ";" and depth == 0:
                return

    def parse(self):
        name = "network"
        variables: dict = {}
        probs: list = []
        while self.peek() is not None:
            kw = self.take("word")
            if kw == "network":
                name = self.take("word")
                self.take(value="{")
                while not self.at("}"):
                    self.skip_block_or_stmt()
                self.take(value="}")
            elif kw == "variable":
                line, col = self.toks[self.i - 1][2:]
                vname = self.take("word")
                if vname in variables:
                    raise BifSemanticError(f"variable {vname!r} declared twice (line {line})")
                variables[vname] = self._variable_body()
            elif kw == "probability":
                probs.append(self._probability())
            else:
                self.i -= 1
                self.fail(f"unknown block {kw!r}")
        return name, variables, probs

    def _variable_body(self):
        self.take(value="{")
        states = None
        while not self.at("}"):
            tok = self.peek()
            if tok[1] == "type":
                self.take()
                self.take(value="discrete")
                self.take(value="[")
                k = self.take("number")
                self.take(value="]")
                self.take(value="{")
                states = [self.take("word") if self.peek()[0] == "word" else self.take("number")]
                while self.at(","):
                    self.take()
                    states.append(self.take("word") if self.peek()[0] == "word" else self.take("number"))
                self.take(value="}")
                self.take(value=";")
                if int(float(k)) != len(states):
                    raise BifSemanticError(f"declared {k} states but listed {len(states)}")
            else:
                self.skip_block_or_stmt()
        self.take(value="}")
        if states is None:
            self.fail("variable without a discrete type declaration")
        return states

    def _values(self):
        vals = [float(self.take("number"))]
        while self.at(","):
            self.take()
            vals.append(float(self.take("number")))
        return vals

    def _probability(self):
        line = self.toks[self.i - 1][2]
        self.take(value="(")
        child = self.take("word")
        parents = []
        if self.at("|"):
            self.take()
            parents.append(self.take("word"))
            while self.at(","):
                self.take()
                parents.append(self.take("word"))
        self.take(value=")")
        self.take(value="{")
        table = None
        rows = []
        while not self.at("}"):
            tok = self.peek()
            if tok[1] == "table":
                self.take()
                table = self._values()
                self.take(value=";")
            elif tok[1] == "(":
                rline = tok[2]
                self.take()
                key = [self.take("word") if self.peek()[0] == "word" else self.take("number")]
                while self.at(","):
                    self.take()
                    key.append(self.take("word") if self.peek()[0] == "word" else self.take("number"))
                self.take(value=")")
                rows.append((tuple(key), self._values(), rline))
                self.take(value=";")
            else:
                self.skip_block_or_stmt()
        self.take(value="}")
        return child, parents, table, rows, line


def parse_bif(text: str) -> DiscreteNet:
    """Parse BIF text into a validated :class:`DiscreteNet`."""
    name, variables, probs = _Parser(text).parse()
    cards = {v: len(s) for v, s in variables.items()}
    parent_order, cpts = {}, {}
    for child, parents, table, rows, line in probs:
        for v in [child] + parents:
            if v not in variables:
                raise BifSemanticError(f"probability block at line {line} uses undeclared variable {v!r}")
        if child in cpts:
            raise BifSemanticError(f"variable {child!r} has two probability blocks")
        shape = tuple(cards[p] for p in parents) + (cards[child],)
        cpt = np.full(shape, np.nan)
        if table is not None:
            if len(table) != int(np.prod(shape)):
                raise BifSemanticError(f"table for {child!r} has {len(table)} entries, expected {int(np.prod(shape))}")
            # BIF tables list the child's states as the slowest index
            cpt = np.asarray(table).reshape((cards[child],) + shape[:-1])
            cpt = np.moveaxis(cpt, 0, -1)
        for key, vals, rline in rows:
            if len(key) != len(parents):
                raise BifSemanticError(f"line {rline}: row key has {len(key)} values for {len(parents)} parents")
            try:
                idx = tuple(variables[p].index(k) for p, k in zip(parents, key))
            except ValueError:
                raise BifSemanticError(f"line {rline}: unknown parent state in {key}") from None
            if len(vals) != cards[child]:
                raise BifSemanticError(f"line {rline}: expected {cards[child]} probabilities, got {len(vals)}")
            cpt[idx] = vals
        if np.isnan(cpt).any():
            raise BifSemanticError(f"probability block for {child!r} (line {line}) does not cover every parent configuration")
        if np.any(cpt < 0):
            raise BifSemanticError(f"negative probability for {child!r}")
        sums = cpt.sum(axis=-1)
        bad = np.argwhere(np.abs(sums - 1.0) > BIF_ROW_TOL)
        if bad.size:
            row = tuple(int(i) for i in bad[0])
            raise BifSemanticError(
                f"row {row} of {child!r} sums to {float(sums[row]):.6g}, not 1 (line {line})"
            )
        parent_order[child] = tuple(parents)
        cpts[child] = cpt
    missing = [v for v in variables if v not in cpts]
    if missing:
        raise BifSemanticError(f"no probability block for {missing}")
    arcs = [(p, c) for c, ps in parent_order.items() for p in ps]
    try:
        graph = MixedGraph.from_edges(list(variables), arcs)
    except GraphError as exc:
        raise BifSemanticError(f"the parent relation contains a directed cycle: {exc}") from exc
    if graph.topological_order() is None:
        raise BifSemanticError("the parent relation contains a directed cycle")
    try:
        return DiscreteNet(graph, cards, cpts, parent_order=parent_order, states=variables, name=name)
    except NetworkError as exc:
        raise BifSemanticError(str(exc)) from exc


def _fmt(x: float) -> str:
    return repr(float(x))


def write_bif(net: DiscreteNet) -> str:
    """Canonical BIF text: one variable block per node, explicit rows per parent configuration."""
    states = net.states or {v: tuple(f"s{i}" for i in range(net.cards[v])) for v in net.vertices}
    out = [f"network {net.name} {{\n}}"]
    for v in net.vertices:
        st = ", ".join(str(s) for s in states[v])
        out.append(f"variable {v} {{\n  type discrete [ {net.cards[v]} ] {{ {st} }};\n}}")
    for v in net.vertices:
        pa = net.parent_order[v]
        cpt = net.cpts[v]
        if not pa:
            out.append(f"probability ( {v} ) {{\n  table {', '.join(_fmt(x) for x in cpt)};\n}}")
            continue
        lines = [f"probability ( {v} | {', '.join(map(str, pa))} ) {{"]
        for idx in itertools.product(*(range(net.cards[p]) for p in pa)):
            key = ", ".join(str(states[p][i]) for p, i in zip(pa, idx))
            lines.append(f"  ({key}) {', '.join(_fmt(x) for x in cpt[idx])};")
        lines.append("}")
        out.append("\n".join(lines))
    return "\n".join(out) + "\n"
