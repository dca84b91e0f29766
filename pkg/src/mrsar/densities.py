"""Observation densities for every regime kind.

AR regimes need the m-step-ahead conditional Gaussian: occupying AR regime
i at time t with counter value m means the last observation generated by
that regime was x_{t-m}, and integrating the latent AR(1) path over the m-1
intermediate steps gives

    mean = alpha (1 - phi^m) / (1 - phi) + phi^m x_{t-m}
    var  = sigma2 (1 - phi^{2m}) / (1 - phi^2).

As m grows this converges to the stationary law, which is also the density
used when the regime has never been occupied (and, under truncation, for
every lag of D or more). Support violations of the shifted families yield
density 0 (log-density -inf) rather than an error.
"""

from __future__ import annotations

import numpy as np

from .model import RegimeSpec
from .special import lgamma

_LOG_2PI = 1.8378770664093454835606594728112353


def _norm_logpdf(x, mean, var):
    return -0.5 * (_LOG_2PI + np.log(var)) - 0.5 * (x - mean) ** 2 / var


def ar1_step_params(reg: RegimeSpec, m) -> tuple:
    """(coefficient of x_lag, additive mean part, variance) at lag m."""
    m = np.asarray(m, dtype=float)
    phim = reg.phi ** m
    mean_add = reg.alpha * (1.0 - phim) / (1.0 - reg.phi)
    var = reg.sigma2 * (1.0 - phim * phim) / (1.0 - reg.phi ** 2)
    return phim, mean_add, var

def ar1_stationary_params(reg: RegimeSpec) -> tuple[float, float]:
    mean = reg.alpha / (1.0 - reg.phi)
    var = reg.sigma2 / (1.0 - reg.phi ** 2)
    return mean, var


def log_density_ar1(reg: RegimeSpec, x, x_lag, m):
    """log f(x | AR regime reg, previous own observation x_lag, lag m)."""
    phim, mean_add, var = ar1_step_params(reg, m)
    return _norm_logpdf(np.asarray(x, dtype=float),
                        mean_add + phim * np.asarray(x_lag, dtype=float), var)


def log_density_ar1_stationary(reg: RegimeSpec, x):
    mean, var = ar1_stationary_params(reg)
    return _norm_logpdf(np.asarray(x, dtype=float), mean, var)


def log_density_iid(reg: RegimeSpec, x):
    """Elementwise log-density of an i.i.d. regime at observations x."""
    x = np.asarray(x, dtype=float)
    if reg.kind == "normal":
        return _norm_logpdf(x, reg.mu, reg.sigma2)
    if reg.kind == "gamma":
        y = reg.sign * (x - reg.q)
        out = np.full(np.shape(y), -np.inf)
        ok = y > 0.0
        yok = np.asarray(y)[ok]
        out[ok] = ((reg.mu - 1.0) * np.log(yok) - yok / reg.sigma2
                   - lgamma(reg.mu) - reg.mu * np.log(reg.sigma2))
        return out if out.ndim else float(out)
    if reg.kind == "lognormal":
        y = reg.sign * (x - reg.q)
        out = np.full(np.shape(y), -np.inf)
        ok = y > 0.0
        yok = np.asarray(y)[ok]
        ly = np.log(yok)
        out[ok] = (-ly - 0.5 * (_LOG_2PI + np.log(reg.sigma2))
                   - 0.5 * (ly - reg.mu) ** 2 / reg.sigma2)
        return out if out.ndim else float(out)
    raise ValueError(f"{reg.kind} is not an i.i.d. regime kind")


def density_iid(reg: RegimeSpec, x):
    return np.exp(log_density_iid(reg, x))


def density_ar1(reg: RegimeSpec, x, x_lag, m):
    return np.exp(log_density_ar1(reg, x, x_lag, m))


def density_ar1_stationary(reg: RegimeSpec, x):
    return np.exp(log_density_ar1_stationary(reg, x))


# ----------------------------------------------------------------------
# table builders used by the filtering kernels


def ar1_tables(reg: RegimeSpec, vmax: int):
    """Per-lag Gaussian parameters, slot 0 holding the stationary law.

    Returns (phim, mean_add, var, neg_half_log_2pi_var), each of length
    vmax + 1 and indexed by the density index of the state graph.
    """
    m = np.arange(1, vmax + 1, dtype=float)
    phim_m, add_m, var_m = ar1_step_params(reg, m)
    smean, svar = ar1_stationary_params(reg)
    phim = np.concatenate(([0.0], phim_m))
    mean_add = np.concatenate(([smean], add_m))
    var = np.concatenate(([svar], var_m))
    lognorm = -0.5 * (_LOG_2PI + np.log(var))
    return phim, mean_add, var, lognorm


def iid_log_table(model, x) -> np.ndarray:
    """(T+1, M) table of i.i.d. log-densities; AR columns are left at 0."""
    x = np.asarray(x, dtype=float)
    m = model.n_regimes
    out = np.zeros((x.shape[0], m))
    for j in range(model.n_ar, m):
        out[:, j] = log_density_iid(model.regimes[j], x)
    return out
