"""Command-line front end.

Subcommands cover the whole workflow: ``simulate`` draws paths from a
model file, ``fit`` estimates parameters (exact or truncated EM, the
lag-substitution variant, or the shared-lag baseline), ``smooth`` and
``classify`` write per-time posteriors and labels, ``detrend`` runs the
robust price pipeline, ``verify`` cross-checks the fast implementations
against the enumeration oracle, and ``bench`` writes scaling tables.

Every option can also come from ``--config FILE`` (``key = value`` lines,
keys matching the flag names); explicit flags win over the file. All
randomness derives from the single ``--seed``. Each output file starts
with one comment line recording the fully resolved configuration. Exit
codes: 0 success, 2 usage or validation problem, 3 numerical failure.
"""

import argparse
import math
import sys
import time
import warnings

import numpy as np

from .backward import backward_smooth
from .baselines import (
    DependentMrsModel,
    dependent_em,
    emlike_fit,
    hamilton_forward,
    kim_backward,
)
from .em import EmError, FitReport, default_start_sampler, em_fit, multistart
from .forward import ZeroLikelihoodError, forward_normalized, forward_simple
from .model import (
    EmConfig,
    ModelError,
    MrsModel,
    RegimeSpec,
    model_1,
    model_2,
    parse_kv,
    parse_model_fields,
)
from .optim import OptimError
from .oracle import brute_dependent, brute_likelihood
from .pipeline import (
    SMOOTHERS,
    classify,
    daily_average,
    read_price_csv,
    rfp_detrend,
    write_detrended_csv,
    write_trend_csv,
)
from .simulate import simulate, simulate_dependent
from .states import build_graph, cardinality, enumerate_counters, truncated_count

__all__ = ["main"]


class UsageError(ValueError):
    """Bad flag value, bad config entry, or inconsistent inputs."""


# ----------------------------------------------------------------------
# option plumbing: every option is declared once, with a cast applied
# uniformly to command-line strings and config-file strings

REQUIRED = object()


def _int(s):
    return int(s)


def _nonneg_int(s):
    v = int(s)
    if v < 0:
        raise ValueError(f"must be >= 0, got {v}")
    return v


def _pos_int(s):
    v = int(s)
    if v < 1:
        raise ValueError(f"must be >= 1, got {v}")
    return v


def _float(s):
    return float(s)


def _str(s):
    return str(s)


def _bool(s):
    t = str(s).strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"expected true or false, got {s!r}")


def _truncation(s):
    t = str(s).strip().lower()
    if t == "none":
        return None
    v = int(s)
    if v < 2:
        raise ValueError(f"truncation cap must be >= 2 or none, got {v}")
    return v


def _sigma2_floor(s):
    t = str(s).strip().lower()
    if t in ("auto", "none"):
        return None
    v = float(s)
    if v < 0.0:
        raise ValueError(f"must be >= 0 or auto, got {v}")
    return v


def _choice(*allowed):
    def cast(s):
        t = str(s).strip()
        if t not in allowed:
            raise ValueError(f"expected one of {', '.join(allowed)}, "
                             f"got {s!r}")
        return t
    return cast


def _int_grid(s):
    try:
        vals = tuple(int(tok) for tok in str(s).split(","))
    except ValueError:
        raise ValueError(f"expected comma-separated integers, got {s!r}")
    if not vals:
        raise ValueError("grid is empty")
    return vals


def _k_grid(s):
    vals = _int_grid(s)
    for v in vals:
        if v not in (1, 2):
            raise ValueError(f"k grid entries must be 1 or 2, got {v}")
    return vals


_EM_OPTS = [
    ("tol", _float, 1.5e-8, "loglik/step convergence threshold"),
    ("max-iters", _pos_int, 500, "iteration cap per restart"),
    ("restarts", _pos_int, 1, "number of random restarts"),
    ("truncation", _truncation, None, "counter cap D, or none for exact"),
    ("sigma2-floor", _sigma2_floor, None,
     "variance floor; auto scales with the data"),
    ("pij-delta", _float, 1e-4,
     "transition probability bounds; 0 disables"),
    ("estimate-pi", _bool, True, "update the start law in the M-step"),
]

# per-subcommand option tables: (flag, cast, default, help)
_OPTIONS = {
    "simulate": [
        ("model", _str, REQUIRED, "model parameter file"),
        ("T", _nonneg_int, REQUIRED, "last time index; rows cover t=0..T"),
        ("mechanism", _choice("independent", "dependent"), "independent",
         "lag mechanism used to draw observations"),
        ("seed", _int, 0, "master seed"),
        ("out", _str, REQUIRED, "output CSV path"),
    ],
    "fit": [
        ("data", _str, REQUIRED, "input CSV (t,x[,r] or plain x)"),
        ("model", _str, REQUIRED, "start/template model file"),
        ("algorithm", _choice("em", "emlike", "dependent-em"), "em",
         "estimation algorithm"),
        *_EM_OPTS,
        ("seed", _int, 0, "master seed (restart substreams derive from it)"),
        ("out-model", _str, REQUIRED, "fitted model file"),
        ("out-trajectory", _str, None, "per-iteration loglik CSV"),
        ("out-restarts", _str, None, "per-restart outcome CSV"),
    ],
    "smooth": [
        ("model", _str, REQUIRED, "fitted model file"),
        ("data", _str, REQUIRED, "input CSV (t,x[,r] or plain x)"),
        ("truncation", _truncation, None, "counter cap D, or none"),
        ("seed", _int, 0, "unused; accepted for config uniformity"),
        ("out", _str, REQUIRED, "output CSV path"),
    ],
    "classify": [
        ("model", _str, REQUIRED, "fitted model file"),
        ("data", _str, REQUIRED, "input CSV (t,x[,r] or plain x)"),
        ("truncation", _truncation, None, "counter cap D, or none"),
        ("threshold", _float, 0.5, "spike label needs marginal > this"),
        ("spike-regime", _nonneg_int, 1, "index of the spike regime"),
        ("seed", _int, 0, "unused; accepted for config uniformity"),
        ("out", _str, REQUIRED, "output CSV path"),
    ],
    "detrend": [
        ("input", _str, REQUIRED, "price CSV (timestamp,price)"),
        ("window", _pos_int, 63, "moving-average window in days"),
        ("n-sd", _float, 3.0, "replacement fence in residual sds"),
        ("iterate", _bool, False, "repeat replacement to a fixpoint"),
        ("smoother", _str, "moving-average", "long-term trend strategy"),
        ("out-trend", _str, REQUIRED, "trend CSV (date,g,h)"),
        ("out-detrended", _str, REQUIRED, "detrended CSV (date,x)"),
    ],
    "verify": [
        ("trials", _pos_int, 5, "random instances per check"),
        ("seed", _int, 0, "master seed"),
    ],
    "bench": [
        ("t-grid", _int_grid, (100, 200, 400, 800),
         "comma-separated last time indices"),
        ("k-grid", _k_grid, (1, 2),
         "comma-separated AR counts (1 or 2)"),
        ("truncation", _truncation, None, "counter cap D, or none"),
        ("repeats", _pos_int, 3, "timed repetitions; the minimum is kept"),
        ("seed", _int, 0, "master seed"),
        ("out", _str, REQUIRED, "output CSV path"),
    ],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrsar",
        description="Markovian regime-switching AR models: simulation, "
                    "estimation, smoothing, detrending, verification, "
                    "benchmarks.")
    subs = parser.add_subparsers(dest="command", required=True)
    for name, opts in _OPTIONS.items():
        sp = subs.add_parser(name)
        sp.add_argument("--config", default=None,
                        help="key = value file supplying flag defaults")
        for flag, _cast, default, help_text in opts:
            if default is REQUIRED:
                help_text += " (required)"
            sp.add_argument(f"--{flag}", dest=flag.replace("-", "_"),
                            default=None, help=help_text)
    return parser


def _load_config_file(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        kv = parse_kv(fh.read())
    return {k.strip().lower().replace("-", "_"): v for k, v in kv.items()}


def _resolve(args: argparse.Namespace, command: str) -> dict:
    """Merge flags over config-file entries over built-in defaults."""
    file_kv = _load_config_file(args.config) if args.config else {}
    out = {}
    for flag, cast, default, _help in _OPTIONS[command]:
        dest = flag.replace("-", "_")
        # config-file keys are lowercased, so "T = 5" matches --T; the
        # file entry is consumed either way, but an explicit flag wins
        from_file = file_kv.pop(dest.lower(), None)
        raw = getattr(args, dest)
        if raw is None:
            raw = from_file
        if raw is None:
            if default is REQUIRED:
                raise UsageError(f"--{flag} is required")
            out[dest] = default
            continue
        try:
            out[dest] = cast(raw)
        except ValueError as exc:
            raise UsageError(f"--{flag}: {exc}") from exc
    if file_kv:
        bad = ", ".join(sorted(file_kv))
        raise UsageError(f"unknown config key(s) for {command}: {bad}")
    return out


def _fmt_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ",".join(str(t) for t in v)
    return str(v)


def _header(command: str, cfg: dict) -> str:
    parts = [f"--{k.replace('_', '-')} {_fmt_value(v)}"
             for k, v in sorted(cfg.items())]
    return f"mrsar {command} " + " ".join(parts)


# ----------------------------------------------------------------------
# shared I/O helpers

def _read_model(path, dependent: bool = False):
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if not dependent:
        return MrsModel.from_kv(text)
    regimes, P, pi = parse_model_fields(parse_kv(text))
    model = DependentMrsModel(regimes, P, pi)
    model.validate()
    return model


def _model_text(model) -> str:
    # DependentMrsModel shares the field layout, so the serializer applies
    return MrsModel.to_kv(model)


def _read_series(path):
    """(x, r-or-None) from a CSV with columns x / t,x / t,x,r."""
    xs, rs = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cells = [c.strip() for c in line.split(",")]
            xcell = cells[0] if len(cells) == 1 else cells[1]
            try:
                v = float(xcell)
            except ValueError:
                continue    # header row
            xs.append(v)
            r = -1
            if len(cells) >= 3:
                try:
                    r = int(cells[2])
                except ValueError:
                    pass    # third column is not a regime index
            rs.append(r)
    if not xs:
        raise UsageError(f"no data rows in {path}")
    x = np.array(xs)
    r = np.array(rs, dtype=np.int64)
    return x, (r if (r >= 0).all() else None)


def _write_csv(path, header_line: str, columns: str, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# {header_line}\n")
        fh.write(columns + "\n")
        for row in rows:
            fh.write(",".join(row) + "\n")


# ----------------------------------------------------------------------
# subcommands

def cmd_simulate(cfg: dict) -> int:
    dependent = cfg["mechanism"] == "dependent"
    model = _read_model(cfg["model"], dependent=dependent)
    draw = simulate_dependent if dependent else simulate
    res = draw(model, cfg["T"] + 1, seed=cfg["seed"])
    rows = ((str(t), repr(float(v)), str(int(r)))
            for t, (v, r) in enumerate(zip(res.x, res.r)))
    _write_csv(cfg["out"], _header("simulate", cfg), "t,x,r", rows)
    return 0


def _em_config(cfg: dict) -> EmConfig:
    config = EmConfig(tol=cfg["tol"], max_iters=cfg["max_iters"],
                      restarts=cfg["restarts"],
                      truncation_D=cfg["truncation"],
                      sigma2_floor=cfg["sigma2_floor"],
                      pij_delta=cfg["pij_delta"],
                      estimate_pi=cfg["estimate_pi"], seed=cfg["seed"])
    config.validate()
    return config


def _loop_multistart(fit_fn, template, x, config, convert=None) -> FitReport:
    """Best-of-restarts driver for the baseline fitters."""
    children = np.random.SeedSequence(config.seed).spawn(config.restarts)
    per, reports = [], []
    for r in range(config.restarts):
        rng = np.random.default_rng(children[r])
        start = default_start_sampler(rng, template, config)
        if convert is not None:
            start = convert(start)
        try:
            rep = fit_fn(start, x, config)
        except (EmError, OptimError, ZeroLikelihoodError) as exc:
            warnings.warn(f"restart {r} failed: {exc}")
            per.append((r, None, -math.inf))
            reports.append(None)
            continue
        per.append((r, rep.theta_hat, rep.loglik))
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
    return FitReport(rep.theta_hat, rep.loglik_trajectory, rep.iterations,
                     rep.termination_reason, per, best,
                     approximate=rep.approximate)


def cmd_fit(cfg: dict) -> int:
    x, _ = _read_series(cfg["data"])
    config = _em_config(cfg)
    algorithm = cfg["algorithm"]
    if algorithm == "dependent-em":
        model0 = _read_model(cfg["model"], dependent=True)
        if config.restarts == 1:
            report = dependent_em(model0, x, config)
        else:
            if model0.n_ar < 1:
                raise UsageError("random restarts need at least one AR "
                                 "regime; use --restarts 1")
            report = _loop_multistart(
                dependent_em, _read_model(cfg["model"]), x, config,
                convert=lambda m: DependentMrsModel(m.regimes, m.P, m.pi))
    else:
        model0 = _read_model(cfg["model"])
        fitter = em_fit if algorithm == "em" else emlike_fit
        if config.restarts == 1:
            report = fitter(model0, x, config)
        elif algorithm == "em":
            report = multistart(x, config, template=model0)
        else:
            report = _loop_multistart(fitter, model0, x, config)

    header = _header("fit", cfg)
    lines = [
        f"# {header}",
        f"# loglik = {report.loglik!r}",
        f"# iterations = {report.iterations}",
        f"# termination = {report.termination_reason}",
        f"# approximate = {'true' if report.approximate else 'false'}",
        f"# best-restart = {report.best_restart}",
    ]
    with open(cfg["out_model"], "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
        fh.write(_model_text(report.theta_hat))
    if cfg["out_trajectory"]:
        rows = ((str(i), repr(float(v)))
                for i, v in enumerate(report.loglik_trajectory))
        _write_csv(cfg["out_trajectory"], header, "iteration,loglik", rows)
    if cfg["out_restarts"]:
        rows = ((str(i), repr(float(ll)),
                 "yes" if theta is not None else "no")
                for i, (_, theta, ll) in enumerate(report.per_restart))
        _write_csv(cfg["out_restarts"], header, "restart,loglik,ok", rows)
    flag = " (approximate objective)" if report.approximate else ""
    print(f"fit: loglik {report.loglik!r}{flag}, "
          f"{report.iterations} iteration(s), {report.termination_reason}")
    return 0


def _check_regime_column(model, r, path):
    if r is not None and int(r.max()) >= model.n_regimes:
        raise UsageError(
            f"model has {model.n_regimes} regimes but {path} mentions "
            f"regime {int(r.max())}")


def _smoothed_marginals(cfg: dict):
    model = _read_model(cfg["model"])
    x, r = _read_series(cfg["data"])
    _check_regime_column(model, r, cfg["data"])
    fwd = forward_normalized(model, x, D=cfg["truncation"])
    sm = backward_smooth(model, fwd)
    return model, x, sm


def cmd_smooth(cfg: dict) -> int:
    model, x, sm = _smoothed_marginals(cfg)
    cols = "t," + ",".join(f"p{i}" for i in range(model.n_regimes))
    rows = ((str(t), *(repr(float(v)) for v in row))
            for t, row in enumerate(sm.regime_marginal))
    _write_csv(cfg["out"], _header("smooth", cfg), cols, rows)
    return 0


def cmd_classify(cfg: dict) -> int:
    model, x, sm = _smoothed_marginals(cfg)
    if not 0 <= cfg["spike_regime"] < model.n_regimes:
        raise UsageError(f"--spike-regime {cfg['spike_regime']} outside "
                         f"0..{model.n_regimes - 1}")
    labels = classify(sm, threshold=cfg["threshold"],
                      spike_regime=cfg["spike_regime"])
    cols = ("t," + ",".join(f"p{i}" for i in range(model.n_regimes))
            + ",label")
    rows = ((str(t), *(repr(float(v)) for v in row), str(labels[t]))
            for t, row in enumerate(sm.regime_marginal))
    _write_csv(cfg["out"], _header("classify", cfg), cols, rows)
    return 0


def cmd_detrend(cfg: dict) -> int:
    series = read_price_csv(cfg["input"])
    days = series.timestamps.astype("datetime64[D]")
    if np.unique(days).shape[0] < len(series):
        series = daily_average(series)
    trend, x = rfp_detrend(series, window=cfg["window"], n_sd=cfg["n_sd"],
                           iterate=cfg["iterate"],
                           smoother=cfg["smoother"])
    header = _header("detrend", cfg)
    dates = series.timestamps.astype("datetime64[D]")
    write_trend_csv(cfg["out_trend"], dates, trend, comment=header)
    write_detrended_csv(cfg["out_detrended"], dates, x, comment=header)
    print(f"detrend: {len(series)} day(s), "
          f"{trend.replaced.size} replaced in the robust pass")
    return 0


# ----------------------------------------------------------------------
# verify: oracle cross-checks on small random instances

def _verify_model(rng, M: int, k: int) -> MrsModel:
    regs = []
    for i in range(M):
        if i < k:
            regs.append(RegimeSpec(
                "ar1", alpha=float(rng.uniform(-0.5, 0.5)),
                phi=float(rng.uniform(-0.8, 0.8)),
                sigma2=float(rng.uniform(0.4, 1.5))))
        else:
            regs.append(RegimeSpec(
                "normal", mu=float(rng.uniform(-2.0, 2.0)),
                sigma2=float(rng.uniform(0.4, 1.5))))
    P = rng.uniform(0.1, 1.0, size=(M, M))
    P /= P.sum(axis=1, keepdims=True)
    pi = rng.uniform(0.1, 1.0, size=M)
    pi /= pi.sum()
    model = MrsModel(tuple(regs), P, pi)
    model.validate()
    return model


def _max_err(*pairs) -> float:
    return max(float(np.max(np.abs(np.asarray(a) - np.asarray(b))))
               for a, b in pairs)


def cmd_verify(cfg: dict) -> int:
    trials = cfg["trials"]
    rng = np.random.default_rng(np.random.SeedSequence(cfg["seed"]))
    failures = 0

    def report(name, err, tol):
        nonlocal failures
        ok = err <= tol
        failures += not ok
        print(f"{'ok  ' if ok else 'FAIL'} {name}: max error {err:.3e} "
              f"(tolerance {tol:g})")

    shapes = [(2, 1), (3, 1), (3, 2), (2, 2)]
    err = 0.0
    for i in range(trials):
        M, k = shapes[i % len(shapes)]
        T = 4 + (i % 3) * 2
        model = _verify_model(rng, M, k)
        x = simulate(model, T, seed=int(rng.integers(2**31))).x
        oracle = brute_likelihood(model, x)
        fwd = forward_normalized(model, x)
        sm = backward_smooth(model, fwd)
        err = max(err, _max_err(
            (fwd.loglik, oracle.loglik),
            (sm.regime_marginal, oracle.regime_post),
            (sm.pairwise, oracle.pairwise)))
    report("exact forward/backward vs enumeration", err, 1e-10)

    err = 0.0
    for i in range(trials):
        M, k = shapes[i % len(shapes)]
        model = _verify_model(rng, M, k)
        x = simulate(model, 8, seed=int(rng.integers(2**31))).x
        lik, _ = forward_simple(model, x)
        err = max(err, abs(math.log(lik)
                           - forward_normalized(model, x).loglik))
    report("linear-scale vs normalized forward", err, 1e-9)

    err = 0.0
    for i in range(trials):
        M, k = shapes[i % len(shapes)]
        model = _verify_model(rng, M, k)
        dep = DependentMrsModel(model.regimes, model.P, model.pi)
        x = simulate_dependent(dep, 7, seed=int(rng.integers(2**31))).x
        oracle = brute_dependent(dep, x)
        fwd = hamilton_forward(dep, x)
        sm = kim_backward(dep, fwd)
        err = max(err, _max_err(
            (fwd.loglik, oracle.loglik),
            (sm.smoothed, oracle.regime_post),
            (sm.pairwise, oracle.pairwise)))
    report("shared-lag forward/backward vs enumeration", err, 1e-10)

    bad = sum(cardinality(t, k) != len(enumerate_counters(t, k))
              for t in range(13) for k in range(1, 4))
    report("state-count formula vs enumeration", float(bad), 0.0)

    if failures:
        print(f"{failures} check(s) failed")
        return 3
    print("all checks passed")
    return 0


# ----------------------------------------------------------------------
# bench

def cmd_bench(cfg: dict) -> int:
    D = cfg["truncation"]
    rows = []
    seeds = iter(np.random.SeedSequence(cfg["seed"]).generate_state(
        len(cfg["k_grid"]) * len(cfg["t_grid"])).tolist())
    # trigger kernel compilation outside every timed region
    warm = model_1()
    wfwd = forward_normalized(warm, simulate(warm, 12, seed=0).x)
    backward_smooth(warm, wfwd)
    for k in cfg["k_grid"]:
        model = model_1() if k == 1 else model_2()
        M = model.n_regimes
        for T in cfg["t_grid"]:
            if D is not None and D <= k:
                raise UsageError(f"--truncation must exceed k={k}")
            x = simulate(model, T + 1, seed=next(seeds)).x
            graph = build_graph(T, k, M, D)
            best = math.inf
            for _ in range(cfg["repeats"]):
                t0 = time.perf_counter()
                fwd = forward_normalized(model, x, D=D, graph=graph)
                backward_smooth(model, fwd)
                best = min(best, time.perf_counter() - t0)
            peak = (cardinality(T, k) if D is None
                    else truncated_count(T, k, D))
            rows.append((str(T), str(k), str(M), _fmt_value(D),
                         repr(best), str(peak)))
    _write_csv(cfg["out"], _header("bench", cfg),
               "T,k,M,D,wall-time,peak-state-count", rows)
    return 0


# ----------------------------------------------------------------------

_HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "smooth": cmd_smooth,
    "classify": cmd_classify,
    "detrend": cmd_detrend,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        cfg = _resolve(args, args.command)
        return _HANDLERS[args.command](cfg)
    except (UsageError, ModelError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
