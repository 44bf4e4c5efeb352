"""Compiled round loop for the tracker; mirrors the reference implementation in tracker.py
step for step (same statistics, same tie-breaking, one uniform draw per sample)."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

STATUS_NEED_INPUT = 0
STATUS_STOPPED = 1
STATUS_CAPPED = 2


@njit(cache=True)
def _best(G, Z, H, g, has_zero):
    b = 0
    for h in range(1, H[g]):
        if has_zero[g]:
            if Z[g, h] < Z[g, b] or (Z[g, h] == Z[g, b] and G[g, h] < G[g, b]):
                b = h
        elif G[g, h] < G[g, b]:
            b = h
    return b


@njit(cache=True)
def _stat(G, best, H, n_groups):
    if n_groups == 0:
        return math.inf
    base = 0.0
    gap = math.inf
    for g in range(n_groups):
        gb = G[g, best[g]]
        base += gb
        if H[g] > 1:
            m = math.inf
            for h in range(H[g]):
                if h != best[g] and G[g, h] < m:
                    m = G[g, h]
            if m - gb < gap:
                gap = m - gb
    d = base + gap
    return d if d > 0.0 else 0.0


@njit(cache=True)
def _log_threshold(x, t, k):
    return k * math.log(x * math.ceil(x * math.log(t) + 1.0) * 2.0 * math.e / k) + 1.0 - x


@njit(cache=True)
def _observe(arm, outcome, N, Nv, cross, nkl, kl, G, Z, logq, zero, arm_group, arm_local, H, has_zero):
    N[arm] += 1
    Nv[arm, outcome] += 1
    n = N[arm]
    negent = 0.0
    for j in range(Nv.shape[1]):
        c = Nv[arm, j]
        if c > 0:
            negent += c * math.log(c / n)
    g = arm_group[arm]
    for h in range(H[g]):
        cross[arm, h] += logq[arm, h, outcome]
        v = negent - cross[arm, h]
        G[g, h] += v - nkl[arm, h]
        nkl[arm, h] = v
        kv = v / n
        kl[arm, h] = kv if kv > 0.0 else 0.0
        if has_zero[g] and zero[arm, h, outcome]:
            Z[g, h] += 1


@njit(cache=True)
def _allocate(best, w, gains, gap, rsum, kl, H, gstart, log_k, d_cap, alpha, n_groups):
    for g in range(n_groups):
        s, e = gstart[g], gstart[g + 1]
        # most confusing alternative under the current weights
        alt = -1
        sc_min = math.inf
        for h in range(H[g]):
            if h == best[g]:
                continue
            sc = 0.0
            for a in range(s, e):
                sc += w[a] * kl[a, h]
            if alt < 0 or sc < sc_min:
                sc_min = sc
                alt = h
        hval = 0.0
        rmax = -math.inf
        for a in range(s, e):
            r = kl[a, alt]
            if r > d_cap:
                r = d_cap
            hval += w[a] * r
            if w[a] > 0 and r > rmax:
                rmax = r
        if gap[g] <= 0.0:
            m = rmax
        else:
            eta = log_k[g] / gap[g]
            acc = 0.0
            for a in range(s, e):
                if w[a] > 0:
                    r = kl[a, alt]
                    if r > d_cap:
                        r = d_cap
                    acc += w[a] * math.exp(eta * (r - rmax))
            m = rmax + math.log(acc) / eta
        if m > hval:
            gap[g] += m - hval
        rsum[g] += hval
        top = -math.inf
        for a in range(s, e):
            r = kl[a, alt]
            if r > d_cap:
                r = d_cap
            gains[a] += r
            if gains[a] > top:
                top = gains[a]
        tot = 0.0
        if gap[g] <= 0.0 or e - s == 1:
            for a in range(s, e):
                w[a] = 1.0 if gains[a] >= top else 0.0
                tot += w[a]
        else:
            eta = log_k[g] / gap[g]
            for a in range(s, e):
                w[a] = math.exp(eta * (gains[a] - top))
                tot += w[a]
        for a in range(s, e):
            w[a] /= tot
    if n_groups == 1:
        for a in range(gstart[0], gstart[1]):
            alpha[a] = w[a]
        return
    inv_tot = 0.0
    for g in range(n_groups):
        c = rsum[g] if rsum[g] > 1e-300 else 1e-300
        inv_tot += 1.0 / c
    for g in range(n_groups):
        c = rsum[g] if rsum[g] > 1e-300 else 1e-300
        gm = (1.0 / c) / inv_tot
        for a in range(gstart[g], gstart[g + 1]):
            alpha[a] = gm * w[a]


@njit(cache=True)
def run_chunk(
    uniforms, cdf, n_out, logq, zero, arm_group, arm_local, gstart, H, has_zero, log_k,
    d_cap, k_threshold, joint_size, log_delta, max_samples, check_tracking,
    N, Nv, cross, nkl, kl, G, Z, gains, gap, w, rsum, Acum, best, scalars, viol,
    out_arm, out_d, out_best,
):
    """Advance the run by at most len(uniforms) samples.

    ``scalars`` holds [t, d]. Returns (status, number of samples written).
    """
    n = N.shape[0]
    n_groups = H.shape[0]
    alpha = np.zeros(n)
    pos = 0
    t = int(scalars[0])
    d = scalars[1]
    while True:
        if t >= n:
            if d == math.inf or (d >= k_threshold and _log_threshold(d, t, k_threshold) < log_delta):
                scalars[0] = t
                scalars[1] = d
                return STATUS_STOPPED, pos
        if t >= max_samples:
            scalars[0] = t
            scalars[1] = d
            return STATUS_CAPPED, pos
        if pos >= uniforms.shape[0]:
            scalars[0] = t
            scalars[1] = d
            return STATUS_NEED_INPUT, pos
        if t < n:
            arm = t
            for a in range(n):
                Acum[a] += 1.0 / n
        else:
            _allocate(best, w, gains, gap, rsum, kl, H, gstart, log_k, d_cap, alpha, n_groups)
            for a in range(n):
                Acum[a] += alpha[a]
            lo = 0
            for a in range(1, n):
                if N[a] < N[lo]:
                    lo = a
            if N[lo] < math.sqrt(t):
                arm = lo
            else:
                arm = 0
                bestr = Acum[0] / N[0]
                for a in range(1, n):
                    r = Acum[a] / N[a]
                    if r > bestr:
                        bestr = r
                        arm = a
        u = uniforms[pos]
        k = n_out[arm]
        outcome = k - 1
        for j in range(k):
            if u < cdf[arm, j]:
                outcome = j
                break
        _observe(arm, outcome, N, Nv, cross, nkl, kl, G, Z, logq, zero, arm_group, arm_local, H, has_zero)
        t += 1
        if check_tracking and t > n:
            root = math.sqrt(t)
            mn = N[0]
            for a in range(n):
                lo_b = Acum[a] - (n - 1) * (root + 2.0)
                hi_b = max(1.0 + Acum[a], root + 1.0)
                if N[a] < lo_b - 1e-9 or N[a] > hi_b + 1e-9:
                    viol[0] += 1
                if N[a] < mn:
                    mn = N[a]
            if mn < math.floor(root) - n:
                viol[1] += 1
        for g in range(n_groups):
            best[g] = _best(G, Z, H, g, has_zero)
        d = _stat(G, best, H, n_groups)
        out_arm[pos] = arm
        out_d[pos] = d
        for g in range(n_groups):
            out_best[pos, g] = best[g]
        pos += 1
