"""Compiled inner loops shared by the learners and the public simplex helpers."""

import numpy as np
from numba import njit


@njit(cache=True)
def clipped_projection_from_log(logw, floor):
    """KL projection of exp(logw) onto {x in simplex : x_a >= floor}.

    The minimizer is x_a = max(floor, w_a / Z). Coordinates are visited in
    descending weight order (stable, so ties go to the lower index); the
    k-th coordinate joins the free set while w_(k) * (1 - (A-k+1) floor)
    exceeds floor * (w_(1) + ... + w_(k-1)). That condition holds on a prefix.
    """
    n = logw.shape[0]
    m = logw[0]
    for i in range(1, n):
        if logw[i] > m:
            m = logw[i]
    w = np.empty(n)
    for i in range(n):
        w[i] = np.exp(logw[i] - m)
    order = np.argsort(-w, kind="mergesort")
    s = w[order[0]]
    k = 1
    while k < n:
        wk = w[order[k]]
        if wk * (1.0 - (n - k) * floor) > floor * s:
            s += wk
            k += 1
        else:
            break
    z = s / (1.0 - (n - k) * floor)
    out = np.empty(n)
    for i in range(n):
        v = w[i] / z
        out[i] = v if v > floor else floor
    return out


@njit(cache=True)
def omd_update(x, g, eta, floor):
    """One entropic mirror-descent step x -> argmin_Omega <x', g> + KL(x', x)/eta."""
    n = x.shape[0]
    logw = np.empty(n)
    for i in range(n):
        logw[i] = np.log(x[i]) - eta * g[i]
    return clipped_projection_from_log(logw, floor)


@njit(cache=True)
def ix_update(x, action, loss, beta, epsilon, eta, floor):
    """Importance-weighted loss estimate followed by the clipped OMD step."""
    n = x.shape[0]
    logw = np.empty(n)
    for i in range(n):
        lx = np.log(x[i])
        g = epsilon * lx
        if i == action:
            g += loss / (x[i] + beta)
        logw[i] = lx - eta * g
    return clipped_projection_from_log(logw, floor)


@njit(cache=True)
def sample_index(p, u):
    """Inverse-CDF draw from p given a uniform u in [0, 1)."""
    c = 0.0
    n = p.shape[0]
    for i in range(n):
        c += p[i]
        if u < c:
            return i
    # u landed in the rounding slack above the final cumulative sum
    for i in range(n - 1, -1, -1):
        if p[i] > 0.0:
            return i
    return n - 1
