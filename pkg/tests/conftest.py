"""Shared helpers: random valid models and a plain-HMM reference."""

import numpy as np
import pytest

from mrsar.model import MrsModel, RegimeSpec


def random_model(rng, M, k, iid_kinds=("normal", "gamma", "lognormal")):
    """A random valid model with k AR regimes and M-k i.i.d. regimes.

    Shifted-family supports are placed far to the left so standard-normal
    test data never lands outside them.
    """
    regs = []
    for _ in range(k):
        regs.append(RegimeSpec(
            "ar1",
            alpha=float(rng.uniform(-1, 1)),
            phi=float(rng.uniform(-0.9, 0.9)),
            sigma2=float(rng.uniform(0.3, 2.0)),
        ))
    for j in range(M - k):
        kind = iid_kinds[j % len(iid_kinds)]
        if kind == "normal":
            regs.append(RegimeSpec("normal",
                                   mu=float(rng.uniform(-2, 2)),
                                   sigma2=float(rng.uniform(0.3, 2.0))))
        elif kind == "gamma":
            regs.append(RegimeSpec("gamma",
                                   mu=float(rng.uniform(1.0, 5.0)),
                                   sigma2=float(rng.uniform(0.5, 2.0)),
                                   q=-12.0, sign=1))
        else:
            regs.append(RegimeSpec("lognormal",
                                   mu=float(rng.uniform(0.5, 2.5)),
                                   sigma2=float(rng.uniform(0.2, 1.0)),
                                   q=-12.0, sign=1))
    P = rng.uniform(0.05, 1.0, size=(M, M))
    P /= P.sum(axis=1, keepdims=True)
    pi = rng.uniform(0.05, 1.0, size=M)
    pi /= pi.sum()
    m = MrsModel(tuple(regs), P, pi)
    m.validate()
    return m


def hmm_forward_backward(pi, P, dens):
    """Scaled forward-backward for a plain HMM (independent reference).

    dens is the (T+1, M) emission-density matrix in linear scale.
    """
    T1, M = dens.shape
    alpha = np.zeros((T1, M))
    c = np.zeros(T1)
    alpha[0] = pi * dens[0]
    c[0] = alpha[0].sum()
    alpha[0] /= c[0]
    for t in range(1, T1):
        a = (alpha[t - 1] @ P) * dens[t]
        c[t] = a.sum()
        alpha[t] = a / c[t]
    beta = np.ones((T1, M))
    for t in range(T1 - 2, -1, -1):
        beta[t] = (P @ (dens[t + 1] * beta[t + 1])) / c[t + 1]
    gamma = alpha * beta
    pair = np.zeros((T1, M, M))
    for t in range(1, T1):
        pair[t] = (alpha[t - 1][:, None] * P
                   * (dens[t] * beta[t])[None, :] / c[t])
    return float(np.log(c).sum()), gamma, pair


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
