"""Electricity-price workflow: daily averaging, robust seasonal trend
removal, candidate model fitting with BIC ranking, and regime labels.

Prices decompose as P_t = g_t + h_t + X_t where g_t is a weekday pattern
(seven coefficients summing to zero), h_t is a slow trend estimated by a
centered moving average, and X_t is the stochastic part handed to the
regime-switching fitters. Trend fitting is robust to spikes: observations
far from a first-pass trend are replaced by it before the final fit.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .em import EmConfig, EmError, FitReport, em_fit
from .forward import ZeroLikelihoodError
from .model import MrsModel, RegimeSpec
from .optim import OptimError

__all__ = [
    "CANDIDATE_NAMES",
    "CandidateFit",
    "GapError",
    "PriceSeries",
    "SMOOTHERS",
    "TrendModel",
    "WEEKDAY_NAMES",
    "bic",
    "candidate_template",
    "classify",
    "daily_average",
    "fit_candidates",
    "quartiles",
    "read_price_csv",
    "rfp_detrend",
    "weekday_index",
    "write_classification_csv",
    "write_detrended_csv",
    "write_trend_csv",
]

WEEKDAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


class GapError(ValueError):
    """A calendar day inside the sample range has no observations."""


@dataclass(frozen=True)
class PriceSeries:
    """Strictly increasing timestamps with one price per stamp."""

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps)
        vals = np.asarray(self.values, dtype=float)
        if ts.ndim != 1 or vals.ndim != 1:
            raise ValueError("timestamps and values must be 1-D")
        if ts.shape[0] != vals.shape[0]:
            raise ValueError(
                f"length mismatch: {ts.shape[0]} timestamps, "
                f"{vals.shape[0]} values")
        if ts.shape[0] < 1:
            raise ValueError("series is empty")
        if ts.shape[0] > 1 and not np.all(ts[1:] > ts[:-1]):
            raise ValueError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.timestamps.shape[0]


def weekday_index(dates) -> np.ndarray:
    """0 = Monday .. 6 = Sunday (the Unix epoch fell on a Thursday)."""
    days = np.asarray(dates, dtype="datetime64[D]").view("int64")
    return ((days + 3) % 7).astype(np.int64)


def daily_average(half_hourly: PriceSeries, expected_per_day: int = 48,
                  warn_below: int = 40) -> PriceSeries:
    """One value per calendar day, the mean of that day's observations.

    Every day between the first and last stamp must appear; a missing day
    raises GapError. Days with observations but fewer than ``warn_below``
    are averaged anyway with a warning.
    """
    days = half_hourly.timestamps.astype("datetime64[D]")
    uniq, inverse, counts = np.unique(days, return_inverse=True,
                                      return_counts=True)
    full = np.arange(uniq[0], uniq[-1] + 1)
    if full.shape[0] != uniq.shape[0]:
        missing = np.setdiff1d(full, uniq)
        shown = ", ".join(str(d) for d in missing[:5])
        raise GapError(
            f"{missing.shape[0]} day(s) without observations: {shown}")
    for d, c in zip(uniq[counts < warn_below], counts[counts < warn_below]):
        warnings.warn(f"day {d}: only {c} of {expected_per_day} "
                      "observations")
    sums = np.zeros(uniq.shape[0])
    np.add.at(sums, inverse, half_hourly.values)
    return PriceSeries(uniq, sums / counts)


@dataclass(frozen=True)
class TrendModel:
    """Weekday coefficients plus a per-day long-term component.

    ``replaced`` records which observations the robust pass swapped for
    the trend before the final fit.
    """

    weekday_betas: np.ndarray     # (7,), sums to zero
    longterm: np.ndarray          # (n,) aligned with the fitted series
    method: str
    replaced: np.ndarray = field(default_factory=lambda: np.zeros(0, int))

    def g_values(self, dates) -> np.ndarray:
        return self.weekday_betas[weekday_index(dates)]


def _moving_average(values: np.ndarray, window: int) -> np.ndarray:
    """Centered moving average; near the edges the window slides inward
    so every estimate averages exactly ``window`` observations."""
    n = values.shape[0]
    if window > n:
        raise ValueError(f"window {window} exceeds series length {n}")
    csum = np.concatenate(([0.0], np.cumsum(values)))
    start = np.clip(np.arange(n) - window // 2, 0, n - window)
    return (csum[start + window] - csum[start]) / window


def _effective_window(window: int, n: int) -> int:
    """Largest whole-week window not exceeding the series length."""
    if window <= n:
        return window
    return max(7, (n // 7) * 7)


def _ma_smoother(values, window):
    return _moving_average(values, _effective_window(window, len(values)))


# named long-term smoothing strategies; a wavelet backend can be
# registered here without touching the RFP driver
SMOOTHERS = {"moving-average": _ma_smoother}


def _fit_trend(dates, values, window: int, smoother=_ma_smoother) -> tuple:
    h = np.asarray(smoother(values, window), dtype=float)
    resid = values - h
    wd = weekday_index(dates)
    betas = np.zeros(7)
    for d in range(7):
        sel = wd == d
        if sel.any():
            betas[d] = resid[sel].mean()
    betas -= betas.mean()
    return betas, h


def rfp_detrend(daily: PriceSeries, window: int = 63, n_sd: float = 3.0,
                iterate: bool = False, max_rounds: int = 20,
                smoother: str = "moving-average"):
    """Robust two-part trend fit; returns (TrendModel, detrended values).

    Pass 1 fits the trend on the raw prices; observations more than
    ``n_sd`` residual standard deviations from it are replaced by the
    trend value, and pass 2 refits on the cleaned series. The returned
    X_t subtracts the pass-2 trend from the ORIGINAL prices, so
    P_t = X_t + g_t + h_t holds exactly. With ``iterate`` the
    replace-and-refit step repeats until the replacement set stabilizes.
    ``smoother`` names the long-term strategy in ``SMOOTHERS``.
    """
    p = daily.values
    n = len(daily)
    if n < 14:
        raise ValueError(
            f"need at least 14 days (two weekly cycles), got {n}")
    if smoother not in SMOOTHERS:
        raise ValueError(f"unknown smoother {smoother!r}; choose from "
                         f"{sorted(SMOOTHERS)}")
    smooth_fn = SMOOTHERS[smoother]
    dates = daily.timestamps.astype("datetime64[D]")

    replaced = np.zeros(0, dtype=int)
    cleaned = p
    rounds = max_rounds if iterate else 1
    for _ in range(rounds):
        betas, h = _fit_trend(dates, cleaned, window, smooth_fn)
        trend = betas[weekday_index(dates)] + h
        resid = cleaned - trend
        sd = float(resid.std())
        if not sd > 0.0:
            warnings.warn("degenerate series: zero residual variance, "
                          "no replacement")
            break
        new_replaced = np.nonzero(np.abs(p - trend) > n_sd * sd)[0]
        if np.array_equal(new_replaced, replaced):
            break
        replaced = new_replaced
        cleaned = p.copy()
        cleaned[replaced] = trend[replaced]

    betas, h = _fit_trend(dates, cleaned, window, smooth_fn)
    x = p - betas[weekday_index(dates)] - h
    model = TrendModel(betas, h, f"{smoother}-{window}", replaced)
    return model, x


def classify(smoothed, threshold: float = 0.5,
             spike_regime: int = 1) -> np.ndarray:
    """Label each time 'spike' iff the smoothed probability of the spike
    regime strictly exceeds the threshold, else 'base'."""
    marg = smoothed.regime_marginal[:, spike_regime]
    return np.where(marg > threshold, "spike", "base")


def bic(loglik: float, n_params: int, n_obs: int) -> float:
    if n_obs < 1:
        raise ValueError("n_obs must be at least 1")
    return -2.0 * loglik + n_params * math.log(n_obs)


def quartiles(x) -> tuple[float, float]:
    """First and third quartiles, linear interpolation between order
    statistics (R type 7)."""
    q1, q3 = np.quantile(np.asarray(x, dtype=float), [0.25, 0.75],
                         method="linear")
    return float(q1), float(q3)


# ----------------------------------------------------------------------
# candidate models for the detrended series

CANDIDATE_NAMES = ("M1-LN", "M1-Gamma", "M2-LN", "M2-Gamma")


def _ar_start(x) -> RegimeSpec:
    x = np.asarray(x, dtype=float)
    v = float(x.var())
    if v > 0.0 and x.shape[0] > 1:
        c = float(np.corrcoef(x[:-1], x[1:])[0, 1])
        phi = float(np.clip(c, -0.9, 0.9))
        if not np.isfinite(phi):
            phi = 0.5
    else:
        phi = 0.5
    alpha = float(x.mean()) * (1.0 - phi)
    s2 = max(v * (1.0 - phi * phi), 1e-3)
    return RegimeSpec("ar1", alpha=alpha, phi=phi, sigma2=s2)


def _tail_moments(y):
    y = y[y > 0.0]
    if y.shape[0] < 2 or not y.var() > 0.0:
        return None
    return float(y.mean()), float(y.var())


def _lognormal_start(x, q, sign) -> RegimeSpec:
    y = sign * (np.asarray(x, dtype=float) - q)
    mom = _tail_moments(y)
    if mom is None:
        return RegimeSpec("lognormal", mu=0.0, sigma2=1.0, q=q, sign=sign)
    ly = np.log(y[y > 0.0])
    s2 = max(float(ly.var()), 1e-3)
    return RegimeSpec("lognormal", mu=float(ly.mean()), sigma2=s2,
                      q=q, sign=sign)


def _gamma_start(x, q, sign) -> RegimeSpec:
    y = sign * (np.asarray(x, dtype=float) - q)
    mom = _tail_moments(y)
    if mom is None:
        return RegimeSpec("gamma", mu=1.0, sigma2=1.0, q=q, sign=sign)
    m1, v = mom
    shape = max(m1 * m1 / v, 0.1)
    return RegimeSpec("gamma", mu=shape, sigma2=m1 / shape, q=q, sign=sign)


def candidate_template(name: str, x) -> MrsModel:
    """Starting model for one named candidate, with shifts fixed at the
    empirical quartiles of the detrended data and moment-based initial
    parameter values."""
    q1, q3 = quartiles(x)
    base = _ar_start(x)
    if name == "M1-LN":
        regs = (base, _lognormal_start(x, q3, 1))
    elif name == "M1-Gamma":
        regs = (base, _gamma_start(x, q3, 1))
    elif name == "M2-LN":
        regs = (base, _lognormal_start(x, q3, 1),
                _lognormal_start(x, q1, -1))
    elif name == "M2-Gamma":
        regs = (base, _gamma_start(x, q3, 1),
                _lognormal_start(x, q1, -1))
    else:
        raise ValueError(f"unknown candidate {name!r}; choose from "
                         f"{CANDIDATE_NAMES}")
    M = len(regs)
    P = np.full((M, M), 0.0)
    for i in range(M):
        P[i] = (1.0 - 0.55) / (M - 1)
        P[i, i] = 0.55
    P[0, 0] = 0.85
    P[0, 1:] = 0.15 / (M - 1)
    pi = np.full(M, 1.0 / M)
    model = MrsModel(regs, P, pi)
    model.validate()
    return model


@dataclass
class CandidateFit:
    name: str
    report: FitReport | None
    bic: float
    error: str | None = None


def fit_candidates(x, candidates=CANDIDATE_NAMES,
                   config: EmConfig | None = None) -> list[CandidateFit]:
    """Fit each candidate to the detrended series and rank by BIC.

    Failures are recorded per candidate and ranked last; the start
    distribution pi is held fixed at uniform rather than estimated.
    """
    x = np.asarray(x, dtype=float)
    if config is None:
        config = EmConfig(truncation_D=56, estimate_pi=False)
    out = []
    for idx, name in enumerate(candidates):
        template = candidate_template(name, x)
        try:
            report = em_fit(template, x, config)
        except (EmError, OptimError, ZeroLikelihoodError) as exc:
            out.append(CandidateFit(name, None, math.inf, str(exc)))
            continue
        n_params = template.num_free_parameters(
            pi_estimated=config.estimate_pi)
        out.append(CandidateFit(
            name, report, bic(report.loglik, n_params, x.shape[0])))
    order = sorted(range(len(out)), key=lambda i: (out[i].bic, i))
    return [out[i] for i in order]


# ----------------------------------------------------------------------
# CSV interfaces

def read_price_csv(path) -> PriceSeries:
    """`timestamp,price` rows with ISO-8601 stamps; '#' lines and a
    header row are skipped."""
    stamps = []
    vals = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            first, _, rest = line.partition(",")
            try:
                v = float(rest)
            except ValueError:
                continue    # header row
            stamps.append(np.datetime64(first))
            vals.append(v)
    if not stamps:
        raise ValueError(f"no data rows in {path}")
    return PriceSeries(np.array(stamps), np.array(vals))


def _write_rows(path, header, rows, comment=None):
    with open(path, "w", encoding="utf-8") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


def write_trend_csv(path, dates, trend: TrendModel, comment=None):
    g = trend.g_values(dates)
    rows = ((str(d), repr(float(gv)), repr(float(hv)))
            for d, gv, hv in zip(dates, g, trend.longterm))
    _write_rows(path, "date,g,h", rows, comment)


def write_detrended_csv(path, dates, x, comment=None):
    rows = ((str(d), repr(float(v))) for d, v in zip(dates, x))
    _write_rows(path, "date,x", rows, comment)


def write_classification_csv(path, dates, x, p_spike, labels,
                             comment=None):
    rows = ((str(d), repr(float(v)), repr(float(p)), str(lab))
            for d, v, p, lab in zip(dates, x, p_spike, labels))
    _write_rows(path, "date,x,p_spike,label", rows, comment)
