"""Oracle sample complexity c(D*) and its per-target lower bound, via zero-sum matrix games."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .graph import MixedGraph, enumerate_mec
from .network import kl_arrays


@dataclass
class GameSolution:
    value: float  # max-min value from the allocation player's program
    alpha: np.ndarray  # maximising allocation over rows
    response: np.ndarray  # minimising mixture over columns
    upper: float  # min-max value from the alternative player's program

    @property
    def gap(self) -> float:
        return self.upper - self.value


def solve_matrix_game(m: np.ndarray) -> GameSolution:
    """Solve max_{alpha in simplex} min_j sum_i alpha_i m[i, j] as a pair of linear programs."""
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("payoff matrix must be a nonempty 2-d array")
    if not np.all(np.isfinite(m)):
        raise ValueError("payoff matrix has non-finite entries")
    rows, cols = m.shape
    # primal: maximise v s.t. m^T alpha >= v, sum alpha = 1
    c = np.zeros(rows + 1)
    c[-1] = -1.0
    a_ub = np.hstack([-m.T, np.ones((cols, 1))])
    a_eq = np.hstack([np.ones((1, rows)), np.zeros((1, 1))])
    bounds = [(0, None)] * rows + [(None, None)]
    p = linprog(c, A_ub=a_ub, b_ub=np.zeros(cols), A_eq=a_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if p.status != 0:
        raise RuntimeError(f"primal program failed: {p.message}")
    # dual: minimise u s.t. m y <= u, sum y = 1
    c2 = np.zeros(cols + 1)
    c2[-1] = 1.0
    a_ub2 = np.hstack([m, -np.ones((rows, 1))])
    a_eq2 = np.hstack([np.ones((1, cols)), np.zeros((1, 1))])
    bounds2 = [(0, None)] * cols + [(None, None)]
    q = linprog(c2, A_ub=a_ub2, b_ub=np.zeros(rows), A_eq=a_eq2, b_eq=[1.0], bounds=bounds2, method="highs")
    if q.status != 0:
        raise RuntimeError(f"dual program failed: {q.message}")
    alpha = np.clip(p.x[:rows], 0.0, None)
    alpha /= alpha.sum()
    y = np.clip(q.x[:cols], 0.0, None)
    y /= y.sum()
    # report values evaluated at the returned strategies so the gap is certified
    value = float((m.T @ alpha).min())
    upper = float((m @ y).max())
    return GameSolution(value, alpha, y, upper)


def _truth_config(cset, truth: MixedGraph) -> int:
    return cset.index_of(truth.directed)


def truth_models(hyp, truth: MixedGraph) -> list[np.ndarray]:
    """Per-arm outcome distribution implied by ``truth``."""
    out = []
    for tgt, cset in hyp.candidates.items():
        ci = _truth_config(cset, truth)
        out += [cset.tables[ci, r] for r in range(len(cset.arms))]
    return out


def dag_payoffs(hyp, truth: MixedGraph) -> np.ndarray:
    """Rows: arms. Columns: DAGs of the class other than ``truth``. Entry: KL(truth || alternative)."""
    dags = hyp.dags if hyp.dags is not None else enumerate_mec(hyp.cpdag)
    ptrue = truth_models(hyp, truth)
    cols = []
    for d in dags:
        if d.directed == truth.directed:
            continue
        col = []
        for cset in hyp.candidates.values():
            ci = cset.index_of(d.directed)
            for r in range(len(cset.arms)):
                col.append(_kl_clipped(ptrue[len(col)], cset.tables[ci, r], hyp.eps_p))
        cols.append(col)
    return np.array(cols, dtype=float).T if cols else np.zeros((hyp.n_actions, 0))


def config_payoffs(hyp, truth: MixedGraph) -> np.ndarray:
    """Rows: arms. Columns: (target, wrong configuration) pairs. Zero outside the target's arms."""
    n = hyp.n_actions
    cols = []
    offset = 0
    for tgt, cset in hyp.candidates.items():
        ci = _truth_config(cset, truth)
        k = len(cset.arms)
        for c in range(len(cset)):
            if c == ci:
                continue
            col = np.zeros(n)
            for r in range(k):
                col[offset + r] = _kl_clipped(cset.tables[ci, r], cset.tables[c, r], hyp.eps_p)
            cols.append(col)
        offset += k
    return np.array(cols).T if cols else np.zeros((n, 0))


def _kl_clipped(p, q, eps):
    return kl_arrays(p, np.maximum(q, eps))


def oracle_complexity(hyp, truth: MixedGraph) -> tuple[float, np.ndarray]:
    """c(D*) and a maximising allocation over the arms (c = inf when there is no alternative)."""
    m = dag_payoffs(hyp, truth)
    if m.shape[1] == 0:
        return math.inf, np.full(hyp.n_actions, 1.0 / max(hyp.n_actions, 1))
    sol = solve_matrix_game(m)
    return sol.value, sol.alpha


def oracle_complexity_lower(hyp, truth: MixedGraph) -> tuple[float, np.ndarray]:
    """The per-target relaxation of c(D*): alternatives change one target's cut only."""
    m = config_payoffs(hyp, truth)
    if m.shape[1] == 0:
        return math.inf, np.full(hyp.n_actions, 1.0 / max(hyp.n_actions, 1))
    sol = solve_matrix_game(m)
    return sol.value, sol.alpha
