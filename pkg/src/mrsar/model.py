"""Model containers, validation, and serialization.

A model is a finite collection of regimes driven by a hidden Markov chain.
Regimes with kind ``ar1`` are latent AR(1) processes that condition on the
observation made at their own previous occupancy; the remaining kinds are
i.i.d. given the regime. AR regimes must occupy a contiguous leading block
of the regime list.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

REGIME_KINDS = ("ar1", "normal", "gamma", "lognormal")

# Fields that are meaningful for each regime kind. ``q`` and ``sign`` are
# structural for the shifted families (not counted as free parameters).
_KIND_FIELDS = {
    "ar1": ("alpha", "phi", "sigma2"),
    "normal": ("mu", "sigma2"),
    "gamma": ("mu", "sigma2", "q", "sign"),
    "lognormal": ("mu", "sigma2", "q", "sign"),
}

_FREE_PARAM_COUNT = {"ar1": 3, "normal": 2, "gamma": 2, "lognormal": 2}


class ModelError(ValueError):
    """Raised when a model or config fails validation."""


@dataclass(frozen=True)
class RegimeSpec:
    """One regime of the switching model.

    kind      one of ``ar1``, ``normal``, ``gamma``, ``lognormal``
    alpha     AR(1) intercept
    phi       AR(1) coefficient, |phi| < 1
    sigma2    innovation / shape-family variance parameter (scale for gamma)
    mu        location (normal), log-location (lognormal), shape (gamma)
    q         shift of the gamma / lognormal support boundary
    sign      +1 for support x > q, -1 for support x < q
    """

    kind: str
    alpha: float | None = None
    phi: float | None = None
    sigma2: float | None = None
    mu: float | None = None
    q: float = 0.0
    sign: int = 1

    def violations(self) -> list[str]:
        """Invariant check; returns one message per violated bound."""
        if self.kind not in REGIME_KINDS:
            return [f"kind: unknown regime kind {self.kind!r}"]
        out = []
        for name in _KIND_FIELDS[self.kind]:
            if getattr(self, name) is None:
                out.append(f"{name}: required for kind {self.kind}")
        if out:
            return out
        if self.sigma2 is not None and not self.sigma2 > 0.0:
            out.append(f"sigma2: must be > 0, got {self.sigma2}")
        if self.kind == "ar1" and not abs(self.phi) < 1.0:
            out.append(f"phi: requires |phi| < 1, got {self.phi}")
        if self.kind == "gamma" and not self.mu > 0.0:
            out.append(f"mu: gamma shape must be > 0, got {self.mu}")
        if self.kind in ("gamma", "lognormal") and self.sign not in (-1, 1):
            out.append(f"sign: must be -1 or +1, got {self.sign}")
        return out

    def validate(self) -> None:
        bad = self.violations()
        if bad:
            raise ModelError("; ".join(bad))

    @property
    def is_ar(self) -> bool:
        return self.kind == "ar1"

    def free_values(self) -> list[float]:
        """The estimated parameters of this regime, in a fixed order."""
        return [float(getattr(self, name)) for name in _KIND_FIELDS[self.kind]
                if name not in ("q", "sign")]


@dataclass(frozen=True)
class MrsModel:
    """Regime list plus chain parameters (transition matrix and start law)."""

    regimes: tuple[RegimeSpec, ...]
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
        """Number of AR regimes (the leading block size, often written k)."""
        return sum(1 for r in self.regimes if r.is_ar)

    def violations(self) -> list[str]:
        """All invariant violations, one message per field/bound; [] if valid."""
        out = []
        m = self.n_regimes
        if m < 1:
            return ["regimes: model needs at least one regime"]
        for i, r in enumerate(self.regimes):
            out.extend(f"regime.{i}.{msg}" for msg in r.violations())
        k = self.n_ar
        if k < 1:
            out.append("regimes: model needs at least one ar1 regime")
        if any(r.is_ar for r in self.regimes[k:]):
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

    def num_free_parameters(self, pi_estimated: bool = False) -> int:
        """Count of estimated parameters.

        Regime shifts ``q`` and ``sign`` are structural. The start law adds
        M-1 parameters only when it is actually estimated.
        """
        m = self.n_regimes
        n = sum(_FREE_PARAM_COUNT[r.kind] for r in self.regimes)
        n += m * (m - 1)
        if pi_estimated:
            n += m - 1
        return n

    def theta(self, include_pi: bool = True) -> np.ndarray:
        """Flat parameter vector used for step-size norms and comparisons."""
        vals: list[float] = []
        for r in self.regimes:
            vals.extend(r.free_values())
        vals.extend(self.P.ravel().tolist())
        if include_pi:
            vals.extend(self.pi.tolist())
        return np.array(vals, dtype=float)

    def permuted(self, order: list[int] | np.ndarray) -> "MrsModel":
        """Relabel regimes by ``order`` (new index -> old index)."""
        order = list(order)
        regs = tuple(self.regimes[i] for i in order)
        P = self.P[np.ix_(order, order)]
        pi = self.pi[order]
        out = MrsModel(regs, P, pi)
        out.validate()
        return out

    # ------------------------------------------------------------------
    # serialization

    def to_kv(self) -> str:
        lines = []
        for i, r in enumerate(self.regimes):
            lines.append(f"regime.{i}.kind = {r.kind}")
            for name in _KIND_FIELDS[r.kind]:
                lines.append(f"regime.{i}.{name} = {_fmt(getattr(r, name))}")
        m = self.n_regimes
        for i in range(m):
            for j in range(m):
                lines.append(f"P.{i}.{j} = {_fmt(self.P[i, j])}")
        for i in range(m):
            lines.append(f"pi.{i} = {_fmt(self.pi[i])}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "MrsModel":
        kv = parse_kv(text)
        return cls._from_flat(kv)

    def to_json(self) -> str:
        obj = {
            "regimes": [
                {name: getattr(r, name)
                 for name in ("kind",) + _KIND_FIELDS[r.kind]}
                for r in self.regimes
            ],
            "P": [[float(v) for v in row] for row in self.P],
            "pi": [float(v) for v in self.pi],
        }
        return json.dumps(obj, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MrsModel":
        obj = json.loads(text)
        regimes = []
        for rd in obj["regimes"]:
            rd = dict(rd)
            kind = rd.pop("kind")
            if "sign" in rd:
                rd["sign"] = int(rd["sign"])
            regimes.append(RegimeSpec(kind=kind, **rd))
        model = cls(tuple(regimes), np.array(obj["P"]), np.array(obj["pi"]))
        model.validate()
        return model

    @classmethod
    def _from_flat(cls, kv: dict[str, str]) -> "MrsModel":
        regimes, P, pi = parse_model_fields(kv)
        model = cls(regimes, P, pi)
        model.validate()
        return model


def _fmt(v) -> str:
    """Shortest round-tripping representation (exact for floats)."""
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def parse_kv(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelError(f"line {ln}: expected 'key = value', got {raw!r}")
        key, val = line.split("=", 1)
        out[key.strip()] = val.strip()
    return out


def parse_model_fields(kv: dict[str, str]):
    """(regimes, P, pi) from a flat key-value mapping, unvalidated.

    Shared by the model readers; the caller picks the container type and
    its validation rules.
    """
    reg_idx = sorted({int(k.split(".")[1]) for k in kv
                      if k.startswith("regime.")})
    if reg_idx != list(range(len(reg_idx))):
        raise ModelError(f"regime indices must be 0..M-1, got {reg_idx}")
    m = len(reg_idx)
    regimes = []
    for i in range(m):
        try:
            kind = kv[f"regime.{i}.kind"]
            if kind not in _KIND_FIELDS:
                raise ModelError(f"unknown regime kind {kind!r}")
            kwargs = {}
            for name in _KIND_FIELDS[kind]:
                raw = kv[f"regime.{i}.{name}"]
                kwargs[name] = int(raw) if name == "sign" else float(raw)
        except KeyError as exc:
            raise ModelError(f"missing model key {exc.args[0]!r}") from exc
        regimes.append(RegimeSpec(kind=kind, **kwargs))
    try:
        P = np.empty((m, m))
        for i in range(m):
            for j in range(m):
                P[i, j] = float(kv[f"P.{i}.{j}"])
        pi = np.array([float(kv[f"pi.{i}"]) for i in range(m)])
    except KeyError as exc:
        raise ModelError(f"missing model key {exc.args[0]!r}") from exc
    return tuple(regimes), P, pi


@dataclass(frozen=True)
class EmConfig:
    """Knobs for the EM drivers.

    ``tol`` stops the iteration when either the log-likelihood increase or
    the sup-norm parameter step falls below it. ``truncation_D`` of None
    means the exact augmented state space. ``sigma2_floor`` of None means
    auto (1e-8 times the sample variance of the data, resolved at fit
    time); 0.0 disables the floor. ``pij_delta`` of 0.0 disables the
    transition-probability bounds.
    """

    tol: float = 1.5e-8
    max_iters: int = 500
    restarts: int = 1
    truncation_D: int | None = None
    sigma2_floor: float | None = None
    pij_delta: float = 1e-4
    estimate_pi: bool = True
    seed: int = 0
    mu_max: float = 1e6

    def validate(self) -> None:
        if not self.tol > 0.0:
            raise ModelError("tol must be positive")
        if self.max_iters < 1 or self.restarts < 1:
            raise ModelError("max_iters and restarts must be >= 1")
        if self.truncation_D is not None and self.truncation_D < 2:
            raise ModelError("truncation_D must be >= 2 (or None for exact)")
        if not (0.0 <= self.pij_delta < 0.5):
            raise ModelError("pij_delta must lie in [0, 0.5); 0 disables")
        if self.sigma2_floor is not None and self.sigma2_floor < 0.0:
            raise ModelError("sigma2_floor must be >= 0 (or None for auto)")
        if not self.mu_max > 0.0:
            raise ModelError("mu_max must be positive")

    def to_kv(self) -> str:
        lines = []
        for name in ("tol", "max_iters", "restarts", "truncation_D",
                     "sigma2_floor", "pij_delta", "estimate_pi", "seed",
                     "mu_max"):
            lines.append(f"{name} = {_cfg_fmt(getattr(self, name))}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "EmConfig":
        kv = parse_kv(text)
        return cls.from_dict(kv)

    @classmethod
    def from_dict(cls, kv: dict) -> "EmConfig":
        kwargs = {}
        for name, caster in (("tol", float), ("max_iters", int),
                             ("restarts", int), ("pij_delta", float),
                             ("seed", int), ("mu_max", float)):
            if name in kv and kv[name] is not None:
                kwargs[name] = caster(kv[name])
        if "truncation_D" in kv:
            v = kv["truncation_D"]
            kwargs["truncation_D"] = None if v in (None, "none", "") else int(v)
        if "sigma2_floor" in kv:
            v = kv["sigma2_floor"]
            kwargs["sigma2_floor"] = (None if v in (None, "none", "auto", "")
                                      else float(v))
        if "estimate_pi" in kv:
            v = kv["estimate_pi"]
            kwargs["estimate_pi"] = v if isinstance(v, bool) else (
                str(v).lower() in ("1", "true", "yes"))
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def replace(self, **kwargs) -> "EmConfig":
        return replace(self, **kwargs)


def _cfg_fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    return _fmt(v)


def canonical_labels(model: MrsModel) -> MrsModel:
    """Sort exchangeable AR regimes by descending phi.

    Models whose AR block shares a single kind admit a label symmetry; this
    fixes the convention phi_1 > phi_2 > ... so multistart solutions can be
    compared. Non-AR regimes keep their positions.
    """
    k = model.n_ar
    if k < 2:
        return model
    phis = [model.regimes[i].phi for i in range(k)]
    order = sorted(range(k), key=lambda i: -phis[i])
    if order == list(range(k)):
        return model
    order = order + list(range(k, model.n_regimes))
    return model.permuted(order)


def model_1() -> MrsModel:
    """Two-regime benchmark: one AR regime plus one i.i.d. normal regime."""
    return MrsModel(
        regimes=(
            RegimeSpec("ar1", alpha=0.0, phi=0.75, sigma2=1.0),
            RegimeSpec("normal", mu=0.0, sigma2=1.0),
        ),
        P=np.array([[0.9, 0.1], [0.1, 0.9]]),
        pi=np.array([0.5, 0.5]),
    )


def model_2() -> MrsModel:
    """Two-regime benchmark where both regimes are AR."""
    return MrsModel(
        regimes=(
            RegimeSpec("ar1", alpha=0.0, phi=0.9, sigma2=1.0),
            RegimeSpec("ar1", alpha=0.0, phi=0.4, sigma2=1.0),
        ),
        P=np.array([[0.6, 0.4], [0.4, 0.6]]),
        pi=np.array([0.5, 0.5]),
    )


def spike_example_model() -> MrsModel:
    """Persistent AR base regime with an i.i.d. spike regime."""
    return MrsModel(
        regimes=(
            RegimeSpec("ar1", alpha=0.0, phi=0.95, sigma2=0.2),
            RegimeSpec("normal", mu=2.0, sigma2=1.0),
        ),
        P=np.array([[0.5, 0.5], [0.2, 0.8]]),
        pi=np.array([1.0, 0.0]),
    )
