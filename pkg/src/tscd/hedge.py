"""AdaHedge for reward maximisation (exponential weights with a data-driven learning rate)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class HedgeState:
    """Cumulative gains per expert and cumulative mixability gap."""

    gains: np.ndarray
    gap: float = 0.0
    reward: float = 0.0  # cumulative learner reward sum_t <w_t, r_t>
    rounds: int = 0

    @classmethod
    def fresh(cls, k: int) -> "HedgeState":
        if k < 1:
            raise ValueError("need at least one expert")
        return cls(np.zeros(k))

    @property
    def k(self) -> int:
        return len(self.gains)

    @property
    def eta(self) -> float:
        """ln K / gap, or +inf while the gap is zero (follow the leader)."""
        if self.gap <= 0.0:
            return math.inf
        return math.log(self.k) / self.gap if self.k > 1 else math.inf

    def copy(self) -> "HedgeState":
        return HedgeState(self.gains.copy(), self.gap, self.reward, self.rounds)


def hedge_weights(state: HedgeState) -> np.ndarray:
    """Current weights: exp(eta * gains) normalised; uniform over the leaders when eta is infinite."""
    g = state.gains
    top = g.max()
    eta = state.eta
    if math.isinf(eta):
        w = (g >= top).astype(float)
    else:
        w = np.exp(eta * (g - top))
    return w / w.sum()


def _mix_gap(w: np.ndarray, r: np.ndarray, eta: float) -> tuple[float, float]:
    """(h, m - h) where h = <w, r> and m = (1/eta) ln <w, exp(eta r)>."""
    h = float(w @ r)
    supp = w > 0
    rmax = float(r[supp].max())
    if math.isinf(eta):
        m = rmax
    else:
        m = rmax + math.log(float(w[supp] @ np.exp(eta * (r[supp] - rmax)))) / eta
    return h, max(0.0, m - h)


def adahedge_step(weights: np.ndarray, rewards, state: HedgeState) -> tuple[np.ndarray, HedgeState]:
    """Feed one reward vector; return the next weights and the updated state.

    ``weights`` must be the weights the learner played (``hedge_weights(state)``).
    """
    r = np.asarray(rewards, dtype=float)
    if r.shape != state.gains.shape:
        raise ValueError(f"reward vector has length {r.size}, expected {state.k}")
    new = state.copy()
    h, delta = _mix_gap(np.asarray(weights, dtype=float), r, state.eta)
    new.gap += delta
    new.gains += r
    new.reward += h
    new.rounds += 1
    return hedge_weights(new), new


class AdaHedge:
    """Mutable convenience wrapper used inside the tracker's inner loop."""

    __slots__ = ("gains", "gap", "reward", "k", "log_k", "w")

    def __init__(self, k: int):
        self.k = k
        self.log_k = math.log(k) if k > 1 else 0.0
        self.gains = np.zeros(k)
        self.gap = 0.0
        self.reward = 0.0
        self.w = np.full(k, 1.0 / k)

    def update(self, r: np.ndarray) -> float:
        """Play the current weights against ``r``; returns the learner's reward <w, r>."""
        w = self.w
        h = float(w @ r)
        if self.gap <= 0.0:
            m = float(r[w > 0].max())
        else:
            eta = self.log_k / self.gap
            supp = w > 0
            rs = r[supp]
            rmax = float(rs.max())
            m = rmax + math.log(float(w[supp] @ np.exp(eta * (rs - rmax)))) / eta
        if m > h:
            self.gap += m - h
        self.gains += r
        self.reward += h
        g = self.gains
        top = g.max()
        if self.gap <= 0.0 or self.k == 1:
            w = (g >= top).astype(float)
        else:
            w = np.exp((self.log_k / self.gap) * (g - top))
        self.w = w / w.sum()
        return h


def regret_bound(d: float, t: int, k: int) -> float:
    """sqrt(D T ln K) + D (4/3 ln K + 2)."""
    lk = math.log(k)
    return math.sqrt(d * t * lk) + d * (4.0 / 3.0 * lk + 2.0)
