"""Numba kernels for the filtering recursions on a flattened state graph.

All four passes walk the layered arrays of ``states.StateGraph``. Rows of
layer t live at ``offsets[t]:offsets[t+1]``; ``adv_dst``/``rst_dst`` map a
source row to its successor rows in the next layer. Loops run in a fixed
ascending order so repeated runs accumulate floating-point sums
identically.

AR log-densities are table-driven: ``dens_idx`` selects a slot in the
per-regime parameter tables, slot 0 holding the stationary law and slot m
the m-step-ahead conditional, whose lag observation is x[t-m].
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def forward_pass(offsets, dens_idx, adv_dst, rst_dst, P, pi, x, iid_logd,
                 ar_phim, ar_add, ar_var, ar_lognorm, k):
    """Normalized forward recursion.

    Returns (filtered, pred, lognorm, status). ``status`` is -1 on
    success, or the time index whose observation had zero conditional
    density under every state with prediction mass.
    """
    T1 = x.shape[0]
    M = P.shape[0]
    total = offsets[T1]
    filtered = np.zeros((total, M))
    pred = np.zeros((total, M))
    lognorm = np.zeros(T1)

    max_layer = 0
    for t in range(T1):
        w = offsets[t + 1] - offsets[t]
        if w > max_layer:
            max_layer = w
    slab = np.empty((max_layer, M))

    for j in range(M):
        pred[0, j] = pi[j]

    for t in range(T1):
        lo = offsets[t]
        hi = offsets[t + 1]
        xt = x[t]

        # per-state log-densities, tracking the shift over reachable states
        c = -np.inf
        for r in range(lo, hi):
            for j in range(M):
                if j < k:
                    d = dens_idx[r, j]
                    if d == 0:
                        resid = xt - ar_add[j, 0]
                    else:
                        resid = xt - ar_add[j, d] - ar_phim[j, d] * x[t - d]
                    s = ar_lognorm[j, d] - 0.5 * resid * resid / ar_var[j, d]
                else:
                    s = iid_logd[t, j]
                slab[r - lo, j] = s
                if pred[r, j] > 0.0 and s > c:
                    c = s
        if c == -np.inf:
            return filtered, pred, lognorm, t

        z = 0.0
        for r in range(lo, hi):
            for j in range(M):
                p = pred[r, j]
                if p > 0.0:
                    v = p * math.exp(slab[r - lo, j] - c)
                    filtered[r, j] = v
                    z += v
        if z <= 0.0:
            return filtered, pred, lognorm, t
        lognorm[t] = math.log(z) + c
        inv = 1.0 / z
        for r in range(lo, hi):
            for j in range(M):
                filtered[r, j] *= inv

        # prediction push-forward: leaving regime i resets counter i (AR)
        # or advances every counter (i.i.d.)
        if t + 1 < T1:
            for r in range(lo, hi):
                for i in range(M):
                    f = filtered[r, i]
                    if f == 0.0:
                        continue
                    if i < k:
                        dst = rst_dst[r, i]
                    else:
                        dst = adv_dst[r]
                    for j in range(M):
                        pred[dst, j] += f * P[i, j]

    return filtered, pred, lognorm, -1


@njit(cache=True)
def backward_pass(offsets, adv_dst, rst_dst, P, filtered, pred, T1, k):
    """Smoothing recursion; gamma at the last layer equals the filter.

    Returns (gamma, status); status of t flags a state with smoothed mass
    but zero prediction mass at layer t+1, which signals a forward bug.
    """
    M = P.shape[0]
    total = offsets[T1]
    gamma = np.zeros((total, M))

    max_layer = 0
    for t in range(T1):
        w = offsets[t + 1] - offsets[t]
        if w > max_layer:
            max_layer = w
    rho = np.empty((max_layer, M))

    for r in range(offsets[T1 - 1], offsets[T1]):
        for j in range(M):
            gamma[r, j] = filtered[r, j]

    for t in range(T1 - 2, -1, -1):
        nlo = offsets[t + 1]
        nhi = offsets[t + 2]
        for r in range(nlo, nhi):
            for j in range(M):
                g = gamma[r, j]
                p = pred[r, j]
                if p > 0.0:
                    rho[r - nlo, j] = g / p
                elif g == 0.0:
                    rho[r - nlo, j] = 0.0
                else:
                    return gamma, t
        lo = offsets[t]
        for r in range(lo, nlo):
            for i in range(M):
                if i < k:
                    dst = rst_dst[r, i]
                else:
                    dst = adv_dst[r]
                s = 0.0
                for j in range(M):
                    s += P[i, j] * rho[dst - nlo, j]
                gamma[r, i] = filtered[r, i] * s

    return gamma, -1


@njit(cache=True)
def pairwise_pass(offsets, counters, adv_dst, P, filtered, pred, gamma,
                  T1, k):
    """Adjacent-regime joint posteriors P(R_{t-1}=i, R_t=j | all data).

    AR branch: a counter at 1 pins the previous regime, so the joint is a
    plain marginal of gamma. Non-AR branch: the ratio gamma/pred at the
    advance successor weights the transition from each source state
    (advance and reset targets never coincide, so pred there aggregates
    non-AR sources only).
    """
    M = P.shape[0]
    pairwise = np.zeros((T1, M, M))
    for t in range(1, T1):
        lo = offsets[t]
        hi = offsets[t + 1]
        for r in range(lo, hi):
            for i in range(k):
                if counters[r, i] == 1:
                    for j in range(M):
                        pairwise[t, i, j] += gamma[r, j]
        if M > k:
            for p in range(offsets[t - 1], lo):
                s = adv_dst[p]
                for j in range(M):
                    pr = pred[s, j]
                    if pr > 0.0:
                        ratio = gamma[s, j] / pr
                        if ratio > 0.0:
                            for i in range(k, M):
                                pairwise[t, i, j] += (filtered[p, i]
                                                      * P[i, j] * ratio)
    return pairwise


@njit(cache=True)
def ar1_profile_eval(phi, agg, w_tot):
    """Profiled AR(1) M-step objective at one phi.

    agg rows are the lag buckets of ``stats_pass`` (slot 0 stationary);
    alpha and sigma2 take their closed forms given phi, and the returned
    value is the profiled objective (-inf when the variance closes
    non-positive).
    """
    S1 = agg.shape[0]
    W0 = agg[0, 0]
    U0 = agg[0, 1]
    Y0 = agg[0, 5]
    onep = 1.0 + phi
    num = onep * U0
    den = onep / (1.0 - phi) * W0
    phm = 1.0
    for idx in range(1, S1):
        phm *= phi
        ratio = onep / (1.0 + phm)
        num += ratio * (agg[idx, 1] - phm * agg[idx, 2])
        den += ratio * (1.0 - phm) / (1.0 - phi) * agg[idx, 0]
    alpha = num / den

    total = 0.0
    wlog = 0.0
    phm = 1.0
    for idx in range(1, S1):
        phm *= phi
        ph2m = phm * phm
        ginv = (1.0 - phi * phi) / (1.0 - ph2m)
        a = alpha * (1.0 - phm) / (1.0 - phi)
        ssr = (agg[idx, 5] - 2.0 * a * agg[idx, 1] - 2.0 * phm * agg[idx, 4]
               + 2.0 * a * phm * agg[idx, 2] + a * a * agg[idx, 0]
               + ph2m * agg[idx, 3])
        total += ginv * ssr
        wlog += agg[idx, 0] * math.log(ginv)
    astat = alpha / (1.0 - phi)
    total += (1.0 - phi * phi) * (Y0 - 2.0 * astat * U0 + astat * astat * W0)
    sigma2 = total / w_tot
    if not sigma2 > 0.0:
        return -np.inf
    return (0.5 * wlog + 0.5 * W0 * math.log1p(-phi * phi)
            - 0.5 * w_tot * math.log(sigma2))


@njit(cache=True)
def ar1_profile_argmax(agg, w_tot, lo, hi, n_grid, coarse_tol, xtol,
                       max_iter):
    """Scan + golden section + parabolic refinement, compiled.

    Same three stages and constants as ``optim.maximize_scalar``, with the
    profile objective inlined (the python callback there costs more than
    the whole search on typical bucket counts). Returns (x, f(x), status):
    status 0 ok, 1 non-finite grid value (x reports the abscissa), 2 eval
    budget exceeded.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    xs = np.linspace(lo, hi, n_grid)
    fs = np.empty(n_grid)
    for idx in range(n_grid):
        v = ar1_profile_eval(xs[idx], agg, w_tot)
        if not math.isfinite(v):
            return xs[idx], v, 1
        fs[idx] = v
    i = int(np.argmax(fs))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, n_grid - 1)]
    best_x = xs[i]
    best_f = fs[i]

    evals = 0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = ar1_profile_eval(c, agg, w_tot)
    if fc > best_f:
        best_x, best_f = c, fc
    fd = ar1_profile_eval(d, agg, w_tot)
    if fd > best_f:
        best_x, best_f = d, fd
    evals += 2
    while (b - a) > coarse_tol:
        if evals >= max_iter:
            return best_x, best_f, 2
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = ar1_profile_eval(c, agg, w_tot)
            if fc > best_f:
                best_x, best_f = c, fc
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = ar1_profile_eval(d, agg, w_tot)
            if fd > best_f:
                best_x, best_f = d, fd
        evals += 1

    xa, xb = a, b
    fa = ar1_profile_eval(xa, agg, w_tot)
    if fa > best_f:
        best_x, best_f = xa, fa
    fb = ar1_profile_eval(xb, agg, w_tot)
    if fb > best_f:
        best_x, best_f = xb, fb
    evals += 2
    if fc >= fd:
        xm, fm = c, fc
    else:
        xm, fm = d, fd
    while (xb - xa) > xtol:
        if evals >= max_iter:
            return best_x, best_f, 2
        t1 = (xm - xa) * (fm - fb)
        t2 = (xm - xb) * (fm - fa)
        denom = t1 - t2
        u = math.nan
        if denom != 0.0:
            s1 = (xm - xa) * t1
            s2 = (xm - xb) * t2
            u = xm - 0.5 * (s1 - s2) / denom
        if not (xa < u < xb) or abs(u - xm) < 0.25 * xtol:
            if (xb - xm) > (xm - xa):
                u = xm + (1.0 - invphi) * (xb - xm)
            else:
                u = xm - (1.0 - invphi) * (xm - xa)
        fu = ar1_profile_eval(u, agg, w_tot)
        if fu > best_f:
            best_x, best_f = u, fu
        evals += 1
        if fu >= fm:
            if u >= xm:
                xa, fa = xm, fm
            else:
                xb, fb = xm, fm
            xm, fm = u, fu
        else:
            if u >= xm:
                xb, fb = u, fu
            else:
                xa, fa = u, fu
    return best_x, best_f, 0


@njit(cache=True)
def stats_pass(offsets, dens_idx, x, gamma, k, M, vmax):
    """Smoothed regime marginals plus AR weighted-moment buckets.

    ``ar_aggs[i, d]`` holds (W, sum w*x_t, sum w*x_lag, sum w*x_lag^2,
    sum w*x_t*x_lag, sum w*x_t^2) over all times and states where AR
    regime i carries density slot d; slot 0 pools the stationary terms
    and its lag moments stay 0.
    """
    T1 = x.shape[0]
    regime_marg = np.zeros((T1, M))
    ar_aggs = np.zeros((k, vmax + 1, 6))
    for t in range(T1):
        lo = offsets[t]
        hi = offsets[t + 1]
        xt = x[t]
        for r in range(lo, hi):
            for j in range(M):
                regime_marg[t, j] += gamma[r, j]
            for i in range(k):
                w = gamma[r, i]
                if w == 0.0:
                    continue
                d = dens_idx[r, i]
                xl = x[t - d] if d > 0 else 0.0
                ar_aggs[i, d, 0] += w
                ar_aggs[i, d, 1] += w * xt
                ar_aggs[i, d, 2] += w * xl
                ar_aggs[i, d, 3] += w * xl * xl
                ar_aggs[i, d, 4] += w * xt * xl
                ar_aggs[i, d, 5] += w * xt * xt
    return regime_marg, ar_aggs
