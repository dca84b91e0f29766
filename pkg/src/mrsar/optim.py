"""Bounded one-dimensional maximization for the M-step profile searches.

Three stages: a dense bracketing scan localizes the global optimum (profile
objectives can be multimodal), golden-section shrinks the winning bracket,
and safeguarded parabolic interpolation polishes to the final tolerance.
"""

import math

import numpy as np

__all__ = ["OptimError", "maximize_scalar"]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


class OptimError(Exception):
    """Raised when a 1-D search cannot finish."""


def maximize_scalar(f, lo, hi, n_grid=64, coarse_tol=1e-6, xtol=1e-10,
                    max_iter=200):
    """Maximize f on [lo, hi]; returns (x, f(x)).

    Every grid value must be finite, otherwise an OptimError naming the
    offending abscissa is raised.  max_iter bounds the refinement
    evaluations after the scan.
    """
    if not hi > lo:
        raise ValueError(f"empty search interval [{lo}, {hi}]")
    xs = np.linspace(lo, hi, n_grid)
    fs = np.empty(n_grid)
    for idx in range(n_grid):
        v = float(f(xs[idx]))
        if not math.isfinite(v):
            raise OptimError(
                f"objective is not finite at x={xs[idx]!r} (got {v!r})")
        fs[idx] = v
    i = int(np.argmax(fs))
    a = float(xs[max(i - 1, 0)])
    b = float(xs[min(i + 1, n_grid - 1)])
    best_x, best_f = float(xs[i]), float(fs[i])

    def probe(x):
        nonlocal best_x, best_f
        v = float(f(x))
        if v > best_f:
            best_x, best_f = x, v
        return v

    evals = 0
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = probe(c), probe(d)
    evals += 2
    while (b - a) > coarse_tol:
        if evals >= max_iter:
            raise OptimError(
                f"no convergence after {evals} evaluations; bracket "
                f"[{a!r}, {b!r}] has width {b - a!r}")
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = probe(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = probe(d)
        evals += 1

    # parabolic refinement on the narrowed bracket
    xa, xb = a, b
    fa, fb = probe(xa), probe(xb)
    evals += 2
    if fc >= fd:
        xm, fm = c, fc
    else:
        xm, fm = d, fd
    while (xb - xa) > xtol:
        if evals >= max_iter:
            raise OptimError(
                f"no convergence after {evals} evaluations; bracket "
                f"[{xa!r}, {xb!r}] has width {xb - xa!r}")
        t1 = (xm - xa) * (fm - fb)
        t2 = (xm - xb) * (fm - fa)
        denom = t1 - t2
        u = math.nan
        if denom != 0.0:
            s1 = (xm - xa) * t1
            s2 = (xm - xb) * t2
            u = xm - 0.5 * (s1 - s2) / denom
        if not (xa < u < xb) or abs(u - xm) < 0.25 * xtol:
            # fall back to a golden step into the larger half
            if (xb - xm) > (xm - xa):
                u = xm + (1.0 - _INVPHI) * (xb - xm)
            else:
                u = xm - (1.0 - _INVPHI) * (xm - xa)
        fu = probe(u)
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
    return best_x, best_f
