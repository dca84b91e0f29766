"""Backward smoothing and pairwise transition posteriors.

The smoothed probability of a state is its filtered probability times the
transition-weighted average of smoothed/prediction ratios at its
successors; the recursion starts from the final filter and runs on the
same state graph as the forward pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .forward import ForwardResult
from .model import MrsModel


class InternalInconsistencyError(RuntimeError):
    """Smoothed mass found where the forward pass predicted none."""


@dataclass
class SmoothedResult:
    graph: object
    gamma: np.ndarray            # (total, M)
    regime_marginal: np.ndarray  # (T+1, M)
    pairwise: np.ndarray         # (T+1, M, M); row 0 is all zeros
    ar_aggs: np.ndarray          # (k, vmax+1, 6) weighted AR moments
    _dicts: dict = field(default_factory=dict, repr=False)

    @property
    def n_obs(self) -> int:
        return self.regime_marginal.shape[0]

    def gamma_dict(self, t: int) -> dict:
        """{(counter vector, regime): P(H_t = . | x_{0:T})}."""
        g = self.graph
        lo, hi = int(g.offsets[t]), int(g.offsets[t + 1])
        out = {}
        for r in range(lo, hi):
            key = tuple(int(c) for c in g.counters[r])
            for j in range(self.gamma.shape[1]):
                out[(key, j)] = float(self.gamma[r, j])
        return out

    def counter_marginal(self, t: int, i: int) -> dict:
        """{m: P(R_t = i, N_{t,i} = m | x_{0:T})} for AR regime i."""
        g = self.graph
        if not 0 <= i < g.k:
            raise ValueError(f"regime {i} is not an AR regime")
        lo, hi = int(g.offsets[t]), int(g.offsets[t + 1])
        out: dict[int, float] = {}
        for r in range(lo, hi):
            m = int(g.counters[r, i])
            out[m] = out.get(m, 0.0) + float(self.gamma[r, i])
        return out


def backward_smooth(model: MrsModel, fwd: ForwardResult) -> SmoothedResult:
    """Smoothed state posteriors plus regime marginals and AR moments.

    The pairwise posteriors are filled in too (they share the same
    inputs); ``pairwise_smoothed`` exposes them separately.
    """
    if fwd.status >= 0:
        raise ValueError("cannot smooth a partial forward result")
    g = fwd.graph
    T1 = fwd.n_obs
    k, M = model.n_ar, model.n_regimes
    gamma, status = _kernels.backward_pass(
        g.offsets, g.adv_dst, g.rst_dst, model.P, fwd.filtered, fwd.pred,
        T1, k)
    if status >= 0:
        raise InternalInconsistencyError(
            f"smoothed mass with zero prediction at t={status + 1}")
    regime_marg, ar_aggs = _kernels.stats_pass(
        g.offsets, g.dens_idx, fwd.x, gamma, k, M, g.vmax)
    pairwise = _kernels.pairwise_pass(
        g.offsets, g.counters, g.adv_dst, model.P, fwd.filtered, fwd.pred,
        gamma, T1, k)
    return SmoothedResult(graph=g, gamma=gamma, regime_marginal=regime_marg,
                          pairwise=pairwise, ar_aggs=ar_aggs)


def pairwise_smoothed(model: MrsModel, fwd: ForwardResult,
                      smoothed: SmoothedResult) -> np.ndarray:
    """(T+1, M, M) array; entry [t, i, j] = P(R_{t-1}=i, R_t=j | x)."""
    if smoothed.graph is not fwd.graph:
        raise ValueError("forward and smoothed results use different graphs")
    return smoothed.pairwise
