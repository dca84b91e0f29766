"""EM estimation for the switching AR model with independent regimes.

The E-step runs the normalized forward pass and the smoother; the M-step
consumes lag-bucketed weighted moments (never materializing the Q function)
and updates each regime in closed form, except for the AR coefficient and
the Gamma shape which need a bounded 1-D search.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import _kernels
from .backward import backward_smooth
from .forward import ZeroLikelihoodError, forward_normalized
from .model import EmConfig, MrsModel, RegimeSpec, canonical_labels
from .optim import OptimError
from .special import digamma
from .states import build_graph

__all__ = [
    "EmError",
    "EmSufficientStats",
    "FitReport",
    "default_start_sampler",
    "em_fit",
    "m_step_ar1",
    "m_step_gamma",
    "m_step_lognormal",
    "m_step_normal",
    "m_step_transitions",
    "multistart",
    "resolve_sigma2_floor",
]


class EmError(RuntimeError):
    """An M-step or a whole fit could not be completed."""


@dataclass(frozen=True)
class EmSufficientStats:
    """Weighted sums the M-step consumes.

    ``ar_aggs[i, m]`` holds, for AR regime i and lag m (slot 0 is the
    stationary/never-visited bucket), the smoothed-weight sums of
    (1, x_t, x_lag, x_lag^2, x_t*x_lag, x_t^2).  ``regime_weights`` are the
    per-time smoothed regime marginals, used directly as the i.i.d.
    regimes' weights.
    """

    ar_aggs: np.ndarray          # (k, vmax+1, 6)
    regime_weights: np.ndarray   # (T+1, M)
    pairwise_sum: np.ndarray     # (M, M), summed over t >= 1
    prev_sum: np.ndarray         # (M,), summed marginals at t-1
    initial: np.ndarray          # (M,) smoothed marginal at t = 0

    @classmethod
    def from_smoothed(cls, sm) -> "EmSufficientStats":
        pair = sm.pairwise[1:].sum(axis=0)
        prev = sm.regime_marginal[:-1].sum(axis=0)
        return cls(sm.ar_aggs, sm.regime_marginal, pair, prev,
                   sm.regime_marginal[0].copy())


@dataclass
class FitReport:
    """Outcome of one fit (or the best of several restarts).

    ``approximate`` marks trajectories whose values are not exact
    log-likelihoods (the lag-substitution baseline); such values must not
    be compared against exact ones for model selection.
    """

    theta_hat: MrsModel
    loglik_trajectory: np.ndarray
    iterations: int
    termination_reason: str
    per_restart: list
    best_restart: int
    approximate: bool = False

    @property
    def loglik(self) -> float:
        return float(self.loglik_trajectory[-1])


def resolve_sigma2_floor(config: EmConfig, x: np.ndarray) -> float:
    """None means auto: 1e-8 times the sample variance of the data."""
    if config.sigma2_floor is not None:
        return float(config.sigma2_floor)
    return 1e-8 * float(np.var(np.asarray(x, dtype=float)))


# ----------------------------------------------------------------------
# per-regime M-steps

def _weights_and_support(w, x, q, sign):
    w = np.asarray(w, dtype=float)
    wtot = float(w.sum())
    if not wtot > 0.0:
        raise EmError("degenerate regime: zero total weight")
    idx = np.nonzero(w > 0.0)[0]
    y = sign * (x[idx] - q)
    bad = np.nonzero(y <= 0.0)[0]
    if bad.size:
        raise EmError(f"support violation at t={int(idx[bad[0]])}")
    return w[idx] / wtot, y


def m_step_normal(w, x, sigma2_floor=0.0):
    w = np.asarray(w, dtype=float)
    wtot = float(w.sum())
    if not wtot > 0.0:
        raise EmError("degenerate regime: zero total weight")
    mu = float(np.dot(w, x)) / wtot
    s2 = float(np.dot(w, (x - mu) ** 2)) / wtot
    if not s2 > 0.0 and not sigma2_floor > 0.0:
        raise EmError("degenerate regime: zero variance")
    return mu, max(s2, sigma2_floor)


def m_step_lognormal(w, x, q, sign, sigma2_floor=0.0):
    ww, y = _weights_and_support(w, x, q, sign)
    ly = np.log(y)
    mu = float(np.dot(ww, ly))
    s2 = float(np.dot(ww, (ly - mu) ** 2))
    if not s2 > 0.0 and not sigma2_floor > 0.0:
        raise EmError("degenerate regime: zero variance")
    return mu, max(s2, sigma2_floor)


def m_step_gamma(w, x, q, sign, mu_max=1e6, sigma2_floor=0.0):
    """Shape via the profile first-order condition, scale = mean/shape."""
    ww, y = _weights_and_support(w, x, q, sign)
    m1 = float(np.dot(ww, y))
    mlog = float(np.dot(ww, np.log(y)))
    c = math.log(m1) - mlog
    if not c > 0.0:
        raise EmError("degenerate regime: single support point, shape "
                      f"estimate exceeds mu_max={mu_max!r}")

    def h(a):
        return math.log(a) - float(digamma(a)) - c

    a0 = (3.0 - c + math.sqrt((c - 3.0) ** 2 + 24.0 * c)) / (12.0 * c)
    lo = hi = min(max(a0, 1e-12), mu_max)
    while h(lo) < 0.0:
        lo *= 0.5
        if lo < 1e-300:
            raise EmError("degenerate regime: shape estimate underflows")
    while h(hi) > 0.0:
        hi *= 2.0
        if hi > mu_max:
            raise EmError(
                "degenerate regime: shape estimate exceeds "
                f"mu_max={mu_max!r} (bracket [{lo!r}, {hi!r}])")
    try:
        shape = float(brentq(h, lo, hi, xtol=1e-12, rtol=8.9e-16,
                             maxiter=200))
    except RuntimeError as exc:
        raise EmError("shape search did not converge within 200 "
                      f"iterations; bracket [{lo!r}, {hi!r}]") from exc
    scale = m1 / shape
    return shape, max(scale, sigma2_floor)


def m_step_ar1(agg, sigma2_floor=0.0, eps=1e-6):
    """AR(1) update from lag-bucketed moments.

    For lag m the conditional law is Normal with mean
    alpha*(1-phi^m)/(1-phi) + phi^m * x_lag and variance
    sigma2*(1-phi^2m)/(1-phi^2); the stationary bucket (slot 0) is the
    m -> infinity limit.  alpha and sigma2 have closed forms given phi,
    and phi maximizes the profiled objective on (-1+eps, 1-eps).
    """
    agg = np.asarray(agg, dtype=float)
    W = agg[:, 0]
    w_tot = float(W.sum())
    if not w_tot > 0.0:
        raise EmError("degenerate regime: zero total weight")
    W0, U0, Y0 = float(W[0]), float(agg[0, 1]), float(agg[0, 5])
    Wm = W[1:]
    Um = agg[1:, 1]
    Vm = agg[1:, 2]
    Qm = agg[1:, 3]
    Sm = agg[1:, 4]
    Ym = agg[1:, 5]
    ms = np.arange(1, agg.shape[0], dtype=float)

    def closed_forms(phi):
        phm = phi ** ms
        ph2m = phm * phm
        s = (1.0 - phm) / (1.0 - phi)
        ginv = (1.0 - phi * phi) / (1.0 - ph2m)
        ratio = (1.0 + phi) / (1.0 + phm)          # s_m / g_m
        num = float(np.dot(ratio, Um - phm * Vm)) + (1.0 + phi) * U0
        den = (float(np.dot(ratio * s, Wm))
               + (1.0 + phi) / (1.0 - phi) * W0)
        alpha = num / den
        a = alpha * s
        ssr = (Ym - 2.0 * a * Um - 2.0 * phm * Sm + 2.0 * a * phm * Vm
               + a * a * Wm + ph2m * Qm)
        astat = alpha / (1.0 - phi)
        total = float(np.dot(ginv, ssr))
        total += (1.0 - phi * phi) * (Y0 - 2.0 * astat * U0
                                      + astat * astat * W0)
        sigma2 = total / w_tot
        return alpha, sigma2, ginv

    # compiled twin of maximize_scalar over the profiled objective (see
    # _kernels.ar1_profile_eval): the search dominates
    # M-step cost when driven through a python callback
    phi, val, status = _kernels.ar1_profile_argmax(
        agg, w_tot, -1.0 + eps, 1.0 - eps, 64, 1e-6, 1e-10, 200)
    if status == 1:
        raise OptimError(
            f"objective is not finite at x={phi!r} (got {val!r})")
    if status == 2:
        raise OptimError("no convergence after 200 evaluations in the "
                         "phi profile search")
    alpha, sigma2, _ = closed_forms(phi)
    if not sigma2 > 0.0 and not sigma2_floor > 0.0:
        raise EmError("degenerate regime: zero variance")
    return alpha, phi, max(sigma2, sigma2_floor)


def _project_row(raw, delta):
    """Euclidean projection onto {p : sum p = 1, delta <= p <= 1-delta}."""
    M = raw.shape[0]
    lo, hi = delta, 1.0 - delta
    if M * lo > 1.0 or M * hi < 1.0:
        raise EmError(f"pij_delta={delta!r} infeasible for M={M}")
    # no active bound means the projection is a pure shift onto the
    # simplex hyperplane; typical iterations take this path
    p = raw + (1.0 - float(raw.sum())) / M
    if float(p.min()) >= lo and float(p.max()) <= hi:
        resid = float(p.sum()) - 1.0
        j = int(np.argmax(p - lo)) if resid > 0.0 else int(np.argmax(hi - p))
        p[j] -= resid
        return p
    lam_lo = lo - float(raw.max())
    lam_hi = hi - float(raw.min())
    for _ in range(100):
        lam = 0.5 * (lam_lo + lam_hi)
        if float(np.clip(raw + lam, lo, hi).sum()) < 1.0:
            lam_lo = lam
        else:
            lam_hi = lam
    p = np.clip(raw + 0.5 * (lam_lo + lam_hi), lo, hi)
    resid = float(p.sum()) - 1.0
    if abs(resid) > 1e-9:
        raise EmError("transition-row projection failed to converge")
    j = int(np.argmax(p - lo)) if resid > 0.0 else int(np.argmax(hi - p))
    p[j] -= resid
    return p


def m_step_transitions(stats: EmSufficientStats, P_old, delta=1e-4):
    """Ratio-of-sums update, bounded away from 0/1 when delta > 0.

    Returns (P_new, clamped) where clamped reports whether any raw entry
    fell outside [delta, 1-delta].  A regime with no occupation mass keeps
    its old row (reported as a degenerate-regime warning).
    """
    P_old = np.asarray(P_old, dtype=float)
    M = P_old.shape[0]
    P = P_old.copy()
    clamped = False
    for i in range(M):
        den = float(stats.prev_sum[i])
        if not den > 0.0:
            warnings.warn(f"degenerate regime {i}: no occupation mass, "
                          "transition row frozen", stacklevel=2)
            continue
        raw = stats.pairwise_sum[i] / den
        if delta > 0.0:
            if bool((raw < delta).any() or (raw > 1.0 - delta).any()):
                clamped = True
            P[i] = _project_row(raw, delta)
        else:
            s = float(raw.sum())
            if s > 0.0:
                P[i] = raw / s
    return P, clamped


# ----------------------------------------------------------------------
# fit drivers

def _iid_update(spec, w, x, floor, config):
    """One i.i.d. regime's update; q and sign are structural."""
    if spec.kind == "normal":
        mu, s2 = m_step_normal(w, x, sigma2_floor=floor)
        return RegimeSpec("normal", mu=mu, sigma2=s2)
    if spec.kind == "lognormal":
        mu, s2 = m_step_lognormal(w, x, spec.q, spec.sign,
                                  sigma2_floor=floor)
        return RegimeSpec("lognormal", mu=mu, sigma2=s2, q=spec.q,
                          sign=spec.sign)
    mu, s2 = m_step_gamma(w, x, spec.q, spec.sign, mu_max=config.mu_max,
                          sigma2_floor=floor)
    return RegimeSpec("gamma", mu=mu, sigma2=s2, q=spec.q, sign=spec.sign)


def _updated_pi(initial, model, config):
    if not config.estimate_pi:
        return model.pi
    pi_new = np.clip(initial, 0.0, 1.0)
    return pi_new / pi_new.sum()


def _m_step(model, stats, x, floor, config):
    guard = False
    regs = []
    for i, spec in enumerate(model.regimes):
        if spec.is_ar:
            wtot = float(stats.ar_aggs[i, :, 0].sum())
        else:
            wtot = float(stats.regime_weights[:, i].sum())
        if not wtot > 0.0:
            # an unvisited regime has no data to update from; keep it,
            # like the frozen transition row
            warnings.warn(f"degenerate regime {i}: zero smoothed weight, "
                          "parameters kept")
            regs.append(spec)
            continue
        if spec.is_ar:
            alpha, phi, s2 = m_step_ar1(stats.ar_aggs[i],
                                        sigma2_floor=floor)
            regs.append(RegimeSpec("ar1", alpha=alpha, phi=phi, sigma2=s2))
        else:
            reg = _iid_update(spec, stats.regime_weights[:, i], x, floor,
                              config)
            regs.append(reg)
            s2 = reg.sigma2
        if floor > 0.0 and s2 == floor:
            guard = True
    P_new, clamped = m_step_transitions(stats, model.P, config.pij_delta)
    guard = guard or clamped
    pi_new = _updated_pi(stats.initial, model, config)
    return MrsModel(tuple(regs), P_new, pi_new), guard


def _em_loop(model0, config, estep, mstep):
    """Shared E/M driver.

    estep(model) -> (loglik, aux); mstep(model, aux) -> (model, guard).
    Returns (model, trajectory, iterations, reason); iterations counts
    completed M-steps and the trajectory always ends at the loglik of the
    returned model.
    """
    model = model0
    traj: list[float] = []
    iterations = 0
    guard_last = False
    pending_step_stop = False
    prev_ll = None
    while True:
        ll, aux = estep(model)
        traj.append(ll)
        if pending_step_stop:
            reason = "boundary-guard" if guard_last else "step-below-tol"
            break
        if prev_ll is not None and ll - prev_ll < config.tol:
            reason = ("boundary-guard" if guard_last
                      else "loglik-increase-below-tol")
            break
        if iterations >= config.max_iters:
            reason = "max-iters"
            break
        prev_ll = ll
        new_model, guard_last = mstep(model, aux)
        step = float(np.max(np.abs(new_model.theta() - model.theta())))
        model = new_model
        iterations += 1
        if step < config.tol:
            pending_step_stop = True
    return model, np.asarray(traj), iterations, reason


def em_fit(model0: MrsModel, x, config: EmConfig | None = None,
           graph=None) -> FitReport:
    """Run EM from one starting point.

    The trajectory records the loglik of the model entering each E-step;
    on a parameter-step stop one extra forward pass appends the loglik of
    the final model.  Raises ZeroLikelihoodError if an E-step finds the
    data impossible, and EmError on degenerate M-steps.
    """
    if config is None:
        config = EmConfig()
    config.validate()
    model0.validate()
    x = np.asarray(x, dtype=float)
    floor = resolve_sigma2_floor(config, x)
    if graph is None:
        graph = build_graph(len(x) - 1, model0.n_ar, model0.n_regimes,
                            config.truncation_D)

    def estep(model):
        fwd = forward_normalized(model, x, D=config.truncation_D,
                                 graph=graph)
        return fwd.loglik, fwd

    def mstep(model, fwd):
        sm = backward_smooth(model, fwd)
        stats = EmSufficientStats.from_smoothed(sm)
        return _m_step(model, stats, x, floor, config)

    model, traj, iterations, reason = _em_loop(model0, config, estep,
                                               mstep)
    return FitReport(model, traj, iterations, reason,
                     [(config.seed, model, float(traj[-1]))], 0)


def default_start_sampler(rng, template: MrsModel,
                          config: EmConfig) -> MrsModel:
    """Random starting point with the template's structure.

    AR regimes draw alpha, phi ~ U(-1,1) and sigma2 ~ U(0,4); i.i.d.
    regimes draw mu ~ U(0,8) and sigma2 ~ U(0,4); each self-transition
    p_ii ~ U(0,1) with the row remainder split over the other regimes by
    normalized U(0,1) draws.  Scale draws are floored away from zero, phi
    is kept inside the open unit interval, and q/sign/pi stay structural.
    """
    regs = []
    for spec in template.regimes:
        if spec.is_ar:
            alpha = float(rng.uniform(-1.0, 1.0))
            phi = float(np.clip(rng.uniform(-1.0, 1.0), -1 + 1e-6,
                                1 - 1e-6))
            s2 = max(float(rng.uniform(0.0, 4.0)), 1e-3)
            regs.append(RegimeSpec("ar1", alpha=alpha, phi=phi, sigma2=s2))
        else:
            mu = float(rng.uniform(0.0, 8.0))
            s2 = max(float(rng.uniform(0.0, 4.0)), 1e-3)
            if spec.kind == "gamma":
                mu = max(mu, 1e-2)
            if spec.kind == "normal":
                regs.append(RegimeSpec("normal", mu=mu, sigma2=s2))
            else:
                regs.append(RegimeSpec(spec.kind, mu=mu, sigma2=s2,
                                       q=spec.q, sign=spec.sign))
    M = template.n_regimes
    P = np.empty((M, M))
    for i in range(M):
        diag = float(rng.uniform(0.0, 1.0))
        if M > 1:
            off = rng.uniform(0.0, 1.0, size=M - 1)
            total = float(off.sum())
            if total <= 0.0:
                off = np.ones(M - 1)
                total = float(M - 1)
            share = off / total * (1.0 - diag)
            P[i, :i] = share[:i]
            P[i, i + 1:] = share[i:]
        P[i, i] = diag
    if config.pij_delta > 0.0:
        P = np.vstack([_project_row(P[i], config.pij_delta)
                       for i in range(M)])
    model = MrsModel(tuple(regs), P, template.pi.copy())
    model.validate()
    return model


def multistart(x, config: EmConfig, template: MrsModel, sampler=None,
               graph=None) -> FitReport:
    """Best-of-restarts EM with independently seeded starting points.

    Restart r uses the stream SeedSequence(config.seed).spawn(restarts)[r].
    Failed restarts are recorded with loglik -inf; ties within 1e-9 keep
    the lowest restart index.  AR labels of every terminating point are
    put in canonical (phi-descending) order before comparison.
    """
    if config is None:
        config = EmConfig()
    config.validate()
    if sampler is None:
        sampler = default_start_sampler
    x = np.asarray(x, dtype=float)
    if graph is None:
        graph = build_graph(len(x) - 1, template.n_ar, template.n_regimes,
                            config.truncation_D)
    children = np.random.SeedSequence(config.seed).spawn(config.restarts)
    per: list[tuple[int, MrsModel | None, float]] = []
    reports: list[FitReport | None] = []
    for r in range(config.restarts):
        rng = np.random.default_rng(children[r])
        start = sampler(rng, template, config)
        try:
            rep = em_fit(start, x, config, graph=graph)
        except (EmError, OptimError, ZeroLikelihoodError) as exc:
            warnings.warn(f"restart {r} failed: {exc}", stacklevel=2)
            per.append((r, None, -math.inf))
            reports.append(None)
            continue
        per.append((r, canonical_labels(rep.theta_hat), rep.loglik))
        reports.append(rep)
    best = -1
    for r in range(config.restarts):
        if per[r][1] is None:
            continue
        if best < 0 or per[r][2] > per[best][2] + 1e-9:
            best = r
    if best < 0:
        raise EmError("all restarts failed")
    rep = reports[best]
    return FitReport(per[best][1], rep.loglik_trajectory, rep.iterations,
                     rep.termination_reason, per, best)
