"""Brute-force reference results by regime-path enumeration.

Every quantity the filtering/smoothing stack produces can be computed, for
tiny problems, by summing over all M^(T+1) regime sequences. This module
does exactly that, in plain Python with scipy.stats densities, so it shares
no algorithmic structure with the recursive implementations it is used to
check. Weights are handled in linear scale after one global rescale by the
largest per-sequence log-weight.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

SEQUENCE_LIMIT = 10_000_000


class OracleSizeError(ValueError):
    pass


@dataclass
class OracleResult:
    loglik: float
    likelihood: float
    regime_post: np.ndarray          # (T+1, M) smoothed regime probabilities
    pairwise: np.ndarray             # (T+1, M, M); row t holds (R_{t-1}, R_t)
    state_post: list                 # per t: dict {(counters, regime): prob}
    filtered: list                   # per t: dict {(counters, regime): prob}

    def counter_marginal(self, t: int, i: int, m: int) -> float:
        """P(R_t = i, N_{t,i} = m | x) summed from the state posterior."""
        tot = 0.0
        for (counters, reg), p in self.state_post[t].items():
            if reg == i and counters[i] == m:
                tot += p
        return tot


def _iid_logpdf(reg, x: float) -> float:
    if reg.kind == "normal":
        return float(stats.norm.logpdf(x, loc=reg.mu, scale=math.sqrt(reg.sigma2)))
    if reg.kind == "gamma":
        y = reg.sign * (x - reg.q)
        if y <= 0.0:
            return -math.inf
        return float(stats.gamma.logpdf(y, a=reg.mu, scale=reg.sigma2))
    if reg.kind == "lognormal":
        y = reg.sign * (x - reg.q)
        if y <= 0.0:
            return -math.inf
        return float(stats.lognorm.logpdf(y, s=math.sqrt(reg.sigma2),
                                          scale=math.exp(reg.mu)))
    raise ValueError(reg.kind)


def _ar_logpdf(reg, x: float, x_lag, m) -> float:
    """m-lag conditional Gaussian; m of None means never occupied."""
    if m is None:
        mean = reg.alpha / (1.0 - reg.phi)
        var = reg.sigma2 / (1.0 - reg.phi ** 2)
    else:
        phim = reg.phi ** m
        mean = reg.alpha * (1.0 - phim) / (1.0 - reg.phi) + phim * x_lag
        var = reg.sigma2 * (1.0 - phim * phim) / (1.0 - reg.phi ** 2)
    return float(stats.norm.logpdf(x, loc=mean, scale=math.sqrt(var)))


def brute_likelihood(model, x, D: int | None = None) -> OracleResult:
    """Enumerate the independent-regime model over all regime paths.

    With a cap D the observation density for AR lags of D or more (and for
    never-occupied regimes) is the stationary one and counters are reported
    clamped, matching the truncated filtering target exactly.
    """
    x = np.asarray(x, dtype=float)
    T = x.shape[0] - 1
    M = model.n_regimes
    k = model.n_ar
    if M ** (T + 1) > SEQUENCE_LIMIT:
        raise OracleSizeError(
            f"{M}^{T + 1} regime sequences exceed the oracle limit")

    # log-density lookup: table[t][j][m] with m in 1..t, slot 0 = stationary
    table = []
    for t in range(T + 1):
        row = []
        for j in range(M):
            reg = model.regimes[j]
            if j < k:
                ent = [np.nan] * (t + 1)
                ent[0] = _ar_logpdf(reg, x[t], None, None)
                for m in range(1, t + 1):
                    if D is not None and m >= D:
                        ent[m] = ent[0]
                    else:
                        ent[m] = _ar_logpdf(reg, x[t], x[t - m], m)
            else:
                ent = [_iid_logpdf(reg, x[t])]
            row.append(ent)
        table.append(row)

    with np.errstate(divide="ignore"):
        logP = np.log(model.P)
        logpi = np.log(model.pi)

    cap = D if D is not None else T + 2
    seq_data = []   # (logw, regimes, counters-per-t)
    best = -math.inf
    for seq in itertools.product(range(M), repeat=T + 1):
        last = [None] * k
        logw = logpi[seq[0]]
        counters_path = []
        for t, r in enumerate(seq):
            if t > 0:
                logw += logP[seq[t - 1], r]
            counters = tuple(min(t - last[i], cap) if last[i] is not None
                             else min(t + 1, cap) for i in range(k))
            counters_path.append(counters)
            if logw > -math.inf:
                if r < k:
                    m = t - last[r] if last[r] is not None else None
                    if m is None or (D is not None and m >= D):
                        logw += table[t][r][0]
                    else:
                        logw += table[t][r][m]
                else:
                    logw += table[t][r][0]
            if r < k:
                last[r] = t
        seq_data.append((logw, seq, counters_path))
        if logw > best:
            best = logw

    if best == -math.inf:
        return OracleResult(-math.inf, 0.0,
                            np.zeros((T + 1, M)), np.zeros((T + 1, M, M)),
                            [dict() for _ in range(T + 1)],
                            [dict() for _ in range(T + 1)])

    regime_post = np.zeros((T + 1, M))
    pairwise = np.zeros((T + 1, M, M))
    state_post = [dict() for _ in range(T + 1)]
    total = 0.0
    for logw, seq, counters_path in seq_data:
        w = math.exp(logw - best)
        if w == 0.0:
            continue
        total += w
        for t, r in enumerate(seq):
            regime_post[t, r] += w
            key = (counters_path[t], r)
            state_post[t][key] = state_post[t].get(key, 0.0) + w
            if t > 0:
                pairwise[t, seq[t - 1], r] += w

    regime_post /= total
    pairwise /= total
    for d in state_post:
        for key in d:
            d[key] /= total

    # filtered posteriors: weight each prefix by its own partial likelihood
    filtered = _brute_filtered(model, x, D)

    loglik = best + math.log(total)
    return OracleResult(loglik=loglik, likelihood=math.exp(loglik)
                        if loglik > -745 else 0.0,
                        regime_post=regime_post, pairwise=pairwise,
                        state_post=state_post, filtered=filtered)


def _brute_filtered(model, x, D: int | None):
    """Per-t filtered state posteriors by enumerating prefixes."""
    x = np.asarray(x, dtype=float)
    T = x.shape[0] - 1
    M = model.n_regimes
    k = model.n_ar
    cap = D if D is not None else T + 2
    out = []
    for t_end in range(T + 1):
        acc = {}
        best = -math.inf
        entries = []
        for seq in itertools.product(range(M), repeat=t_end + 1):
            last = [None] * k
            counters = None
            logw = math.log(model.pi[seq[0]]) if model.pi[seq[0]] > 0 else -math.inf
            for t, r in enumerate(seq):
                if logw == -math.inf:
                    break
                if t > 0:
                    p = model.P[seq[t - 1], r]
                    logw += math.log(p) if p > 0 else -math.inf
                    if logw == -math.inf:
                        break
                if t == t_end:
                    # counters refer to occupancies strictly before t
                    counters = tuple(
                        min(t - last[i], cap) if last[i] is not None
                        else min(t + 1, cap) for i in range(k))
                reg = model.regimes[r]
                if r < k:
                    m = t - last[r] if last[r] is not None else None
                    if m is None or (D is not None and m >= D):
                        logw += _ar_logpdf(reg, x[t], None, None)
                    else:
                        logw += _ar_logpdf(reg, x[t], x[t - m], m)
                    last[r] = t
                else:
                    logw += _iid_logpdf(reg, x[t])
            else:
                entries.append((logw, (counters, seq[t_end])))
                if logw > best:
                    best = logw
        if best == -math.inf:
            out.append({})
            continue
        tot = 0.0
        for logw, key in entries:
            w = math.exp(logw - best)
            tot += w
            acc[key] = acc.get(key, 0.0) + w
        for key in acc:
            acc[key] /= tot
        out.append(acc)
    return out


def brute_dependent(model, x) -> OracleResult:
    """Enumeration oracle for the shared-lag (dependent) model.

    AR regimes condition on x_{t-1} regardless of which regime produced
    it; at t = 0 they use their stationary law. State posteriors carry no
    counters (the observation depends on the previous regime only through
    the chain), so the counters slot holds an empty tuple.
    """
    x = np.asarray(x, dtype=float)
    T = x.shape[0] - 1
    M = model.n_regimes
    k = model.n_ar
    if M ** (T + 1) > SEQUENCE_LIMIT:
        raise OracleSizeError(
            f"{M}^{T + 1} regime sequences exceed the oracle limit")

    table = np.empty((T + 1, M))
    for t in range(T + 1):
        for j in range(M):
            reg = model.regimes[j]
            if j < k:
                if t == 0:
                    table[t, j] = _ar_logpdf(reg, x[0], None, None)
                else:
                    table[t, j] = _ar_logpdf(reg, x[t], x[t - 1], 1)
            else:
                table[t, j] = _iid_logpdf(reg, x[t])

    seq_data = []
    best = -math.inf
    for seq in itertools.product(range(M), repeat=T + 1):
        logw = math.log(model.pi[seq[0]]) if model.pi[seq[0]] > 0 else -math.inf
        for t, r in enumerate(seq):
            if logw == -math.inf:
                break
            if t > 0:
                p = model.P[seq[t - 1], r]
                logw += math.log(p) if p > 0 else -math.inf
                if logw == -math.inf:
                    break
            logw += table[t, r]
        seq_data.append((logw, seq))
        if logw > best:
            best = logw

    regime_post = np.zeros((T + 1, M))
    pairwise = np.zeros((T + 1, M, M))
    if best == -math.inf:
        return OracleResult(-math.inf, 0.0, regime_post, pairwise,
                            [dict() for _ in range(T + 1)],
                            [dict() for _ in range(T + 1)])
    total = 0.0
    for logw, seq in seq_data:
        w = math.exp(logw - best)
        if w == 0.0:
            continue
        total += w
        for t, r in enumerate(seq):
            regime_post[t, r] += w
            if t > 0:
                pairwise[t, seq[t - 1], r] += w
    regime_post /= total
    pairwise /= total
    loglik = best + math.log(total)
    state_post = [{((), r): regime_post[t, r] for r in range(M)
                   if regime_post[t, r] > 0} for t in range(T + 1)]
    return OracleResult(loglik=loglik,
                        likelihood=math.exp(loglik) if loglik > -745 else 0.0,
                        regime_post=regime_post, pairwise=pairwise,
                        state_post=state_post, filtered=[])
