"""Compiled inner loops shared by the filter and the simulator."""

import numpy as np
from numba import njit

UNDERFLOW = 1e-300


@njit(cache=True)
def filter_loglik(a, z0, logb, n_alpha, m2_out, lognorm_out, z_out):
    """Normalized HMM filter over a precomputed log-density table.

    For each row ``t`` of ``logb``: predict ``v = a @ z``, weight by the
    densities (scaled by the row maximum so the weights cannot underflow
    en masse), normalize. Writes the post-change mass to ``m2_out[t]`` and
    the cumulative log normalizer to ``lognorm_out[t]``. ``z_out`` may have
    zero rows, in which case beliefs are not stored.

    Returns ``(z, lognorm, failed_row)`` with ``failed_row = -1`` on success.
    """
    n = a.shape[0]
    T = logb.shape[0]
    keep = z_out.shape[0] == T
    z = z0.copy()
    v = np.empty(n)
    lognorm = 0.0
    for t in range(T):
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += a[i, j] * z[j]
            v[i] = s
        mx = -np.inf
        for i in range(n):
            if logb[t, i] > mx:
                mx = logb[t, i]
        if not mx > -np.inf:
            return z, lognorm, t
        total = 0.0
        for i in range(n):
            v[i] *= np.exp(logb[t, i] - mx)
            total += v[i]
        if not total >= UNDERFLOW:
            return z, lognorm, t
        pre = 0.0
        for i in range(n):
            z[i] = v[i] / total
            if i < n_alpha:
                pre += z[i]
        lognorm += np.log(total) + mx
        m2_out[t] = 1.0 - pre
        lognorm_out[t] = lognorm
        if keep:
            for i in range(n):
                z_out[t, i] = z[i]
    return z, lognorm, -1


@njit(cache=True)
def walk_chain(cum, start, u, out):
    """Advance a column-stochastic chain: ``cum[:, j]`` is the cumulative column of state j."""
    n = cum.shape[0]
    s = start
    for t in range(u.shape[0]):
        nxt = n - 1
        for i in range(n):
            if u[t] < cum[i, s]:
                nxt = i
                break
        s = nxt
        out[t] = s
    return s


@njit(cache=True)
def steps_to_absorption(cum, start, n_alpha, u):
    """Number of chain steps until the first post-change state, or -1 if ``u`` runs out."""
    n = cum.shape[0]
    s = start
    for t in range(u.shape[0]):
        nxt = n - 1
        for i in range(n):
            if u[t] < cum[i, s]:
                nxt = i
                break
        s = nxt
        if s >= n_alpha:
            return t + 1, s
    return -1, s
