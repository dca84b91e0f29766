"""Reference algorithms for the shared-lag model and the lag-substitution
EM variant.

The shared-lag (dependent-regime) model conditions every AR regime on the
immediately preceding observation, whatever regime produced it, so ordinary
M-state filtering and smoothing apply.  The lag-substitution variant keeps
the independent-regime model but replaces the unobserved own-regime lag
with a running approximation b_tilde, which makes its objective approximate
and its trajectory non-monotone in general.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .backward import InternalInconsistencyError
from .densities import (
    log_density_ar1,
    log_density_ar1_stationary,
    log_density_iid,
)
from .em import (
    EmConfig,
    EmError,
    EmSufficientStats,
    FitReport,
    _em_loop,
    _iid_update,
    _updated_pi,
    m_step_ar1,
    m_step_transitions,
    resolve_sigma2_floor,
)
from .forward import ZeroLikelihoodError
from .model import ModelError, MrsModel, RegimeSpec

__all__ = [
    "DependentMrsModel",
    "HamiltonResult",
    "KimResult",
    "dependent_em",
    "emlike_fit",
    "hamilton_forward",
    "kim_backward",
]

B_TILDE_LIMIT = 1e12


@dataclass(frozen=True)
class DependentMrsModel:
    """Same shape as MrsModel, but AR regimes share the lag x_{t-1}.

    Because no regime keeps private state, an all-i.i.d. model is legal
    here; the contiguous-leading-block layout for AR regimes still
    applies.
    """

    regimes: tuple
    P: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", np.asarray(self.P, dtype=float))
        object.__setattr__(self, "pi", np.asarray(self.pi, dtype=float))
        object.__setattr__(self, "regimes", tuple(self.regimes))

    @property
    def n_regimes(self) -> int:
        return len(self.regimes)

    @property
    def n_ar(self) -> int:
        return sum(1 for r in self.regimes if r.is_ar)

    def violations(self) -> list[str]:
        out = []
        m = self.n_regimes
        if m < 1:
            return ["regimes: model needs at least one regime"]
        for i, r in enumerate(self.regimes):
            out.extend(f"regime.{i}.{msg}" for msg in r.violations())
        if any(r.is_ar for r in self.regimes[self.n_ar:]):
            out.append("regimes: ar1 regimes must form a contiguous "
                       "leading block")
        if self.P.shape != (m, m):
            out.append(f"P: must be {m}x{m}, got {self.P.shape}")
        else:
            if np.any(self.P < 0.0) or np.any(self.P > 1.0):
                out.append("P: entries must lie in [0, 1]")
            rows = self.P.sum(axis=1)
            for i in np.nonzero(np.abs(rows - 1.0) > 1e-12)[0]:
                out.append(f"P.{i}: row sums to {rows[i]!r}, not 1 "
                           "within 1e-12")
        if self.pi.shape != (m,):
            out.append(f"pi: must have length {m}, got {self.pi.shape}")
        else:
            if np.any(self.pi < 0.0) or np.any(self.pi > 1.0):
                out.append("pi: entries must lie in [0, 1]")
            if abs(float(self.pi.sum()) - 1.0) > 1e-12:
                out.append(f"pi: sums to {float(self.pi.sum())!r}, not 1 "
                           "within 1e-12")
        return out

    def validate(self) -> None:
        bad = self.violations()
        if bad:
            raise ModelError("; ".join(bad))

    def theta(self, include_pi: bool = True) -> np.ndarray:
        vals: list[float] = []
        for r in self.regimes:
            vals.extend(r.free_values())
        vals.extend(self.P.ravel().tolist())
        if include_pi:
            vals.extend(self.pi.tolist())
        return np.array(vals, dtype=float)


@dataclass(frozen=True)
class HamiltonResult:
    """Scaled forward pass over the plain M-state chain."""

    x: np.ndarray
    filtered: np.ndarray        # (T, M)
    pred: np.ndarray            # (T, M)
    log_normalizer: np.ndarray  # (T,)
    loglik: float
    status: int                 # -1 complete; else first impossible t


@dataclass(frozen=True)
class KimResult:
    smoothed: np.ndarray   # (T, M)
    pairwise: np.ndarray   # (T, M, M), all-zero slice at t = 0


def _shared_lag_logdens(model, x):
    T = x.shape[0]
    tab = np.empty((T, model.n_regimes))
    for j, spec in enumerate(model.regimes):
        if spec.is_ar:
            tab[0, j] = log_density_ar1_stationary(spec, x[0])
            if T > 1:
                tab[1:, j] = log_density_ar1(spec, x[1:], x[:-1], 1)
        else:
            tab[:, j] = log_density_iid(spec, x)
    return tab


def _scaled_forward(model, x, tab):
    T, M = tab.shape
    filtered = np.zeros((T, M))
    pred = np.zeros((T, M))
    lognorm = np.full(T, -np.inf)
    pr = model.pi.astype(float).copy()
    status = -1
    for t in range(T):
        pred[t] = pr
        ld = tab[t]
        active = (pr > 0.0) & (ld > -np.inf)
        if not active.any():
            status = t
            break
        c = float(ld[active].max())
        w = np.zeros(M)
        w[active] = pr[active] * np.exp(ld[active] - c)
        z = float(w.sum())
        if not z > 0.0:
            status = t
            break
        filtered[t] = w / z
        lognorm[t] = math.log(z) + c
        pr = filtered[t] @ model.P
    loglik = float(lognorm.sum()) if status < 0 else -math.inf
    return HamiltonResult(x, filtered, pred, lognorm, loglik, status)


def hamilton_forward(model, x) -> HamiltonResult:
    """Filtered/prediction probabilities for the shared-lag model.

    Raises ZeroLikelihoodError (with the partial pass attached) if some
    observation is impossible under every reachable regime.
    """
    model.validate()
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ValueError("x must be a nonempty 1-D array")
    res = _scaled_forward(model, x, _shared_lag_logdens(model, x))
    if res.status >= 0:
        raise ZeroLikelihoodError(res.status, res)
    return res


def kim_backward(model, fwd: HamiltonResult) -> KimResult:
    """Smoothed and pairwise posteriors from a completed forward pass."""
    if fwd.status >= 0:
        raise ValueError("cannot smooth a partial forward result")
    f, pred = fwd.filtered, fwd.pred
    T, M = f.shape
    sm = np.empty_like(f)
    sm[T - 1] = f[T - 1]
    pair = np.zeros((T, M, M))
    P = model.P
    for t in range(T - 2, -1, -1):
        nxt = sm[t + 1]
        pd = pred[t + 1]
        bad = (nxt > 0.0) & (pd == 0.0)
        if bad.any():
            raise InternalInconsistencyError(
                f"smoothed mass with zero prediction at t={t + 1}")
        ratio = np.where(pd > 0.0, nxt / np.where(pd > 0.0, pd, 1.0), 0.0)
        sm[t] = f[t] * (P @ ratio)
    for t in range(1, T):
        pd = pred[t]
        ratio = np.where(pd > 0.0, sm[t] / np.where(pd > 0.0, pd, 1.0),
                         0.0)
        pair[t] = f[t - 1][:, None] * P * ratio[None, :]
    return KimResult(sm, pair)


def _transition_stats(smoothed, pairwise):
    M = smoothed.shape[1]
    return EmSufficientStats(
        ar_aggs=np.zeros((0, 1, 6)),
        regime_weights=smoothed,
        pairwise_sum=pairwise[1:].sum(axis=0),
        prev_sum=smoothed[:-1].sum(axis=0),
        initial=smoothed[0].copy(),
    )


def _ar_lag_agg(w, x, lag, stationary_w0):
    """Lag-1 moment bucket; slot 0 optionally carries the t=0 weight."""
    agg = np.zeros((2, 6))
    if stationary_w0:
        agg[0] = (w[0], w[0] * x[0], 0.0, 0.0, 0.0, w[0] * x[0] * x[0])
    ww = w[1:]
    xt = x[1:]
    agg[1] = (ww.sum(), ww @ xt, ww @ lag, ww @ (lag * lag),
              ww @ (xt * lag), ww @ (xt * xt))
    return agg


def _mstep_regimes(model, smoothed, x, floor, config, lag_fn,
                   stationary_w0):
    """Per-regime updates shared by both baseline fitters.

    lag_fn(i) supplies AR regime i's lag vector (length T-1, aligned with
    x[1:]). Zero-weight regimes keep their parameters, mirroring the
    frozen transition row.
    """
    guard = False
    regs = []
    for i, spec in enumerate(model.regimes):
        w = smoothed[:, i]
        if not float(w.sum()) > 0.0:
            warnings.warn(f"degenerate regime {i}: zero smoothed weight, "
                          "parameters kept")
            regs.append(spec)
            continue
        if spec.is_ar:
            agg = _ar_lag_agg(w, x, lag_fn(i), stationary_w0)
            alpha, phi, s2 = m_step_ar1(agg, sigma2_floor=floor)
            regs.append(RegimeSpec("ar1", alpha=alpha, phi=phi,
                                   sigma2=s2))
        else:
            reg = _iid_update(spec, w, x, floor, config)
            regs.append(reg)
            s2 = reg.sigma2
        if floor > 0.0 and s2 == floor:
            guard = True
    return regs, guard


def dependent_em(model0, x, config: EmConfig | None = None) -> FitReport:
    """Exact EM for the shared-lag model (monotone trajectory).

    The AR update maximizes the full Q-slice including the stationary
    t=0 term, so each iteration cannot decrease the loglik.
    """
    if config is None:
        config = EmConfig()
    config.validate()
    model0.validate()
    x = np.asarray(x, dtype=float)
    floor = resolve_sigma2_floor(config, x)

    def estep(model):
        fwd = hamilton_forward(model, x)
        return fwd.loglik, fwd

    def mstep(model, fwd):
        km = kim_backward(model, fwd)
        regs, guard = _mstep_regimes(model, km.smoothed, x, floor, config,
                                     lambda i: x[:-1], stationary_w0=True)
        st = _transition_stats(km.smoothed, km.pairwise)
        P_new, clamped = m_step_transitions(st, model.P, config.pij_delta)
        guard = guard or clamped
        pi_new = _updated_pi(st.initial, model, config)
        return type(model)(tuple(regs), P_new, pi_new), guard

    model, traj, iterations, reason = _em_loop(model0, config, estep,
                                               mstep)
    return FitReport(model, traj, iterations, reason,
                     [(config.seed, model, float(traj[-1]))], 0)


# ----------------------------------------------------------------------
# lag-substitution variant

@dataclass(frozen=True)
class EmLikeState:
    """Forward pass with the own-regime lag replaced by b_tilde."""

    b_tilde: np.ndarray        # (T, k)
    filtered: np.ndarray
    pred: np.ndarray
    log_normalizer: np.ndarray
    loglik: float              # approximate objective, not a loglik


def _emlike_forward(model: MrsModel, x) -> EmLikeState:
    T = x.shape[0]
    M, k = model.n_regimes, model.n_ar
    iid_tab = np.empty((T, M - k))
    for j in range(k, M):
        iid_tab[:, j - k] = log_density_iid(model.regimes[j], x)
    b = np.empty((T, k))
    filtered = np.zeros((T, M))
    pred = np.zeros((T, M))
    lognorm = np.empty(T)
    pr = model.pi.astype(float).copy()
    ld = np.empty(M)
    for t in range(T):
        pred[t] = pr
        for i in range(k):
            spec = model.regimes[i]
            if t == 0:
                ld[i] = log_density_ar1_stationary(spec, x[0])
            else:
                ld[i] = log_density_ar1(spec, x[t], b[t - 1, i], 1)
        ld[k:] = iid_tab[t]
        active = (pr > 0.0) & (ld > -np.inf)
        if not active.any():
            raise ZeroLikelihoodError(t, None)
        c = float(ld[active].max())
        w = np.zeros(M)
        w[active] = pr[active] * np.exp(ld[active] - c)
        z = float(w.sum())
        if not z > 0.0:
            raise ZeroLikelihoodError(t, None)
        filtered[t] = w / z
        lognorm[t] = math.log(z) + c
        for i in range(k):
            spec = model.regimes[i]
            if t == 0:
                b[0, i] = x[0]
            else:
                b[t, i] = (filtered[t, i] * x[t]
                           + (1.0 - pred[t, i])
                           * (spec.alpha + spec.phi * b[t - 1, i]))
            if not abs(b[t, i]) <= B_TILDE_LIMIT:
                raise EmError(
                    f"b-tilde diverged at t={t} for regime {i}: "
                    f"value {b[t, i]!r} exceeds {B_TILDE_LIMIT:g}")
        pr = filtered[t] @ model.P
    return EmLikeState(b, filtered, pred, lognorm, float(lognorm.sum()))


def emlike_fit(model0: MrsModel, x,
               config: EmConfig | None = None) -> FitReport:
    """Lag-substitution EM variant for independent-regime models.

    Reported trajectory values are the approximate objective (flagged via
    FitReport.approximate); there is no monotonicity guarantee.  The AR
    update is the lag-1 weighted regression with b_tilde as the lag.
    """
    if config is None:
        config = EmConfig()
    config.validate()
    model0.validate()
    x = np.asarray(x, dtype=float)
    floor = resolve_sigma2_floor(config, x)

    def estep(model):
        st = _emlike_forward(model, x)
        return st.loglik, st

    def mstep(model, st):
        km = kim_backward(
            model, HamiltonResult(x, st.filtered, st.pred,
                                  st.log_normalizer, st.loglik, -1))
        regs, guard = _mstep_regimes(model, km.smoothed, x, floor, config,
                                     lambda i: st.b_tilde[:-1, i],
                                     stationary_w0=False)
        st2 = _transition_stats(km.smoothed, km.pairwise)
        P_new, clamped = m_step_transitions(st2, model.P,
                                            config.pij_delta)
        guard = guard or clamped
        pi_new = _updated_pi(st2.initial, model, config)
        return MrsModel(tuple(regs), P_new, pi_new), guard

    model, traj, iterations, reason = _em_loop(model0, config, estep,
                                               mstep)
    return FitReport(model, traj, iterations, reason,
                     [(config.seed, model, float(traj[-1]))], 0,
                     approximate=True)
