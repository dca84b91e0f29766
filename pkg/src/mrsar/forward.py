"""Forward recursions over the augmented state space.

``forward_normalized`` is the workhorse: per-step normalized filtering on
the layered state graph, linear in the number of reachable states per
step, returning filtered and prediction probabilities and the
log-likelihood as the sum of per-step log-normalizers.

``forward_simple`` is a deliberately independent reference path: linear
scale, dict-keyed states, predecessor-driven sums. It exists so the two
implementations can check each other and is only usable for short series
before the unnormalized mass underflows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .densities import (
    ar1_tables,
    density_ar1,
    density_ar1_stationary,
    density_iid,
    iid_log_table,
)
from .model import MrsModel
from .states import StateGraph, build_graph, enumerate_counters, predecessors


class ZeroLikelihoodError(RuntimeError):
    """An observation had zero density under every reachable state.

    The partially filled result (valid up to time ``t - 1``) is attached
    as ``partial``.
    """

    def __init__(self, t: int, partial: "ForwardResult"):
        super().__init__(f"zero-likelihood at t={t}")
        self.t = t
        self.partial = partial


class UnderflowError(RuntimeError):
    pass


@dataclass(frozen=True)
class ForwardResult:
    """Filtered/prediction probabilities on the graph's flat row layout."""

    graph: StateGraph
    x: np.ndarray               # (T+1,) the observations filtered over
    filtered: np.ndarray        # (total, M)
    pred: np.ndarray            # (total, M)
    log_normalizer: np.ndarray  # (T+1,)
    loglik: float
    status: int                 # -1 ok, else first bad time index

    @property
    def n_obs(self) -> int:
        return self.log_normalizer.shape[0]

    @property
    def regime_filtered(self) -> np.ndarray:
        """(T+1, M) filtered regime marginals."""
        T1 = self.n_obs
        return np.add.reduceat(self.filtered, self.graph.offsets[:T1],
                               axis=0)

    def _layer_dict(self, arr: np.ndarray, t: int) -> dict:
        g = self.graph
        lo, hi = int(g.offsets[t]), int(g.offsets[t + 1])
        out = {}
        for r in range(lo, hi):
            key = tuple(int(c) for c in g.counters[r])
            for j in range(arr.shape[1]):
                out[(key, j)] = float(arr[r, j])
        return out

    def filtered_dict(self, t: int) -> dict:
        """{(counter vector, regime): P(H_t = . | x_{0:t})}."""
        return self._layer_dict(self.filtered, t)

    def pred_dict(self, t: int) -> dict:
        """{(counter vector, regime): P(H_t = . | x_{0:t-1})}."""
        return self._layer_dict(self.pred, t)


def _density_tables(model: MrsModel, x: np.ndarray, vmax: int):
    k = model.n_ar
    phim = np.empty((k, vmax + 1))
    add = np.empty((k, vmax + 1))
    var = np.empty((k, vmax + 1))
    lognorm = np.empty((k, vmax + 1))
    for i in range(k):
        phim[i], add[i], var[i], lognorm[i] = ar1_tables(model.regimes[i],
                                                         vmax)
    return phim, add, var, lognorm, iid_log_table(model, x)


def forward_normalized(model: MrsModel, x, D: int | None = None,
                       graph: StateGraph | None = None) -> ForwardResult:
    """Filtering pass; raises ZeroLikelihoodError with a partial result.

    ``graph`` may be passed in to reuse a prebuilt state graph (it must
    cover at least T time steps with the same k, M, D).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] < 1:
        raise ValueError("x must be a nonempty 1-d sequence")
    model.validate()
    T = x.shape[0] - 1
    k, M = model.n_ar, model.n_regimes
    if graph is None:
        graph = build_graph(T, k, M, D)
    elif (graph.k, graph.M, graph.D) != (k, M, D) or graph.t_max < T:
        raise ValueError("graph does not match the model/data/truncation")

    phim, add, var, lognorm_tab, iid_logd = _density_tables(model, x,
                                                            graph.vmax)
    filtered, pred, lognorm, status = _kernels.forward_pass(
        graph.offsets, graph.dens_idx, graph.adv_dst, graph.rst_dst,
        model.P, model.pi, x, iid_logd, phim, add, var, lognorm_tab, k)
    loglik = float(lognorm.sum()) if status < 0 else -np.inf
    res = ForwardResult(graph=graph, x=x, filtered=filtered, pred=pred,
                        log_normalizer=lognorm, loglik=loglik,
                        status=int(status))
    if status >= 0:
        raise ZeroLikelihoodError(int(status), res)
    return res


def forward_simple(model: MrsModel, x):
    """Linear-scale forward sums for short series.

    Returns (likelihood, alpha) where alpha[t] maps (counter vector,
    regime) to the unnormalized joint density of the state and x_{0:t}.
    Underflow (or an exactly impossible observation) raises UnderflowError
    suggesting the normalized version.
    """
    x = np.asarray(x, dtype=float)
    model.validate()
    T1 = x.shape[0]
    M, k = model.n_regimes, model.n_ar
    P = model.P

    def dens(t: int, n: tuple, j: int) -> float:
        reg = model.regimes[j]
        if j < k:
            m = n[j]
            if m > t:
                return float(density_ar1_stationary(reg, x[t]))
            return float(density_ar1(reg, x[t], x[t - m], m))
        return float(density_iid(reg, x[t]))

    start = (1,) * k
    alpha = [{(start, j): model.pi[j] * dens(0, start, j)
              for j in range(M)}]
    if sum(alpha[0].values()) == 0.0:
        raise UnderflowError(
            "forward mass is exactly 0 at t=0; use forward_normalized")
    for t in range(1, T1):
        cur = {}
        prev = alpha[t - 1]
        for n in enumerate_counters(t, k):
            inbound = predecessors(n, t, k, M)
            if not inbound:
                continue
            for j in range(M):
                s = 0.0
                for n_prev, i in inbound:
                    a = prev.get((n_prev, i), 0.0)
                    if a != 0.0:
                        s += P[i, j] * a
                if s != 0.0:
                    cur[(n, j)] = dens(t, n, j) * s
        if not cur or sum(cur.values()) == 0.0:
            raise UnderflowError(
                f"forward mass is exactly 0 at t={t}; this is underflow "
                "or an impossible observation; use forward_normalized")
        alpha.append(cur)
    return sum(alpha[T1 - 1].values()), alpha
