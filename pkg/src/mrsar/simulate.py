"""Simulation of independent-regime and dependent-regime switching models.

One master seed is split into per-component substreams (the chain plus one
per regime), so editing one regime's parameters never perturbs the sampled
chain path or the other regimes' draws.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["SimResult", "simulate", "simulate_dependent"]


@dataclass(frozen=True)
class SimResult:
    """A simulated path: observations, regimes, and AR latent paths.

    ``latents`` has one row per AR regime (the full path B_t, observed or
    not); it is None for the dependent-regime mechanism, where all regimes
    share the lag x_{t-1}.
    """

    x: np.ndarray
    r: np.ndarray
    latents: np.ndarray | None
    seed: int


def _spawn_streams(seed, M):
    children = np.random.SeedSequence(seed).spawn(1 + M)
    return [np.random.default_rng(c) for c in children]


def _iid_draw(spec, rng):
    if spec.kind == "normal":
        return spec.mu + math.sqrt(spec.sigma2) * rng.standard_normal()
    if spec.kind == "gamma":
        return spec.q + spec.sign * rng.gamma(spec.mu, spec.sigma2)
    if spec.kind == "lognormal":
        z = spec.mu + math.sqrt(spec.sigma2) * rng.standard_normal()
        return spec.q + spec.sign * math.exp(z)
    raise ValueError(f"unknown regime kind {spec.kind!r}")


def _sample_chain(model, T, rng):
    r = np.empty(T, dtype=np.int64)
    r[0] = rng.choice(model.pi.shape[0], p=model.pi)
    for t in range(1, T):
        r[t] = rng.choice(model.P.shape[0], p=model.P[r[t - 1]])
    return r


def simulate(model, T, seed=0) -> SimResult:
    """Independent-regime mechanism, T observations.

    Every AR regime evolves its own latent path at every step (started
    from a stationary draw); an i.i.d. regime draws fresh at each
    occupancy; x_t copies the component selected by r_t.
    """
    model.validate()
    if T < 1:
        raise ValueError("T must be >= 1")
    M, k = model.n_regimes, model.n_ar
    streams = _spawn_streams(seed, M)
    r = _sample_chain(model, T, streams[0])
    latents = np.empty((k, T))
    for i in range(k):
        spec = model.regimes[i]
        rng = streams[1 + i]
        sd = math.sqrt(spec.sigma2)
        b = (spec.alpha / (1.0 - spec.phi)
             + math.sqrt(spec.sigma2 / (1.0 - spec.phi ** 2))
             * rng.standard_normal())
        latents[i, 0] = b
        for t in range(1, T):
            b = spec.alpha + spec.phi * b + sd * rng.standard_normal()
            latents[i, t] = b
    x = np.empty(T)
    for t in range(T):
        i = int(r[t])
        if i < k:
            x[t] = latents[i, t]
        else:
            x[t] = _iid_draw(model.regimes[i], streams[1 + i])
    return SimResult(x, r, latents, int(seed))


def simulate_dependent(model, T, seed=0) -> SimResult:
    """Dependent-regime mechanism: every regime conditions on x_{t-1}.

    An AR regime occupying t = 0 starts from its stationary draw; i.i.d.
    regimes draw fresh at each occupancy.  Works for any object with
    regimes/P/pi attributes, including i.i.d.-only baselines.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    M = len(model.regimes)
    streams = _spawn_streams(seed, M)
    r = _sample_chain(model, T, streams[0])
    x = np.empty(T)
    for t in range(T):
        i = int(r[t])
        spec = model.regimes[i]
        rng = streams[1 + i]
        if spec.kind != "ar1":
            x[t] = _iid_draw(spec, rng)
        elif t == 0:
            x[0] = (spec.alpha / (1.0 - spec.phi)
                    + math.sqrt(spec.sigma2 / (1.0 - spec.phi ** 2))
                    * rng.standard_normal())
        else:
            x[t] = (spec.alpha + spec.phi * x[t - 1]
                    + math.sqrt(spec.sigma2) * rng.standard_normal())
    return SimResult(x, r, None, int(seed))
