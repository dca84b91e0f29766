"""Augmented hidden state bookkeeping.

The hidden state at time t is the pair (counter vector, regime). Component i
of the counter vector records how many steps have passed since AR regime i
was last occupied; the value t+1 plays the role of "never occupied so far".
Under truncation with cap D every counter is clamped at D and all lags of D
or more share the stationary observation density.

Two views are provided:

* combinatorial enumeration (``enumerate_counters``/``cardinality``) of the
  vectors admissible at time t, which is exact reachability whenever at
  least one non-AR regime exists and an over-approximation when every
  regime is AR;
* a layered reachability graph (``build_graph``) holding, per time step,
  the sorted reachable counter vectors together with advance/reset
  successor row maps. The filtering recursions run on this graph, so the
  forward and backward passes share one transition structure by
  construction.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

_INT64_MAX = 2**63 - 1


class StateError(ValueError):
    pass


def cardinality(t: int, k: int) -> int:
    """Number of admissible counter vectors at time t with k AR regimes."""
    if t < 0 or k < 1:
        raise StateError(f"need t >= 0 and k >= 1, got t={t}, k={k}")
    total = 0
    for m in range(min(t, k) + 1):
        total += math.comb(t, m) * math.comb(k, m) * math.factorial(m)
    if total > _INT64_MAX:
        raise OverflowError(
            f"state count {total} exceeds 64-bit indexing range")
    return total


def truncated_count(t: int, k: int, D: int) -> int:
    """Counter vectors admissible at time t when counters are capped at D."""
    if t < D:
        return cardinality(t, k)
    return cardinality(D - 1, k)


def enumerate_counters(t: int, k: int, D: int | None = None) -> list[tuple[int, ...]]:
    """All admissible counter vectors at time t, sorted lexicographically.

    Exact rule: entries that are not t+1 are pairwise distinct values from
    {1, ..., t}, at most min(t, k) of them; remaining entries equal t+1.
    With cap D and t >= D the clamped image is produced instead: entries
    below D are pairwise distinct, any number of entries may sit at D.
    """
    if t < 0 or k < 1:
        raise StateError(f"need t >= 0 and k >= 1, got t={t}, k={k}")
    if D is not None:
        if D < 2 or D <= k:
            raise StateError(f"cap must satisfy D >= 2 and D > k, got D={D}")
        if t >= D:
            return _enumerate_clamped(k, D)
    out = []
    never = t + 1
    for m in range(min(t, k) + 1):
        for pos in itertools.combinations(range(k), m):
            for vals in itertools.permutations(range(1, t + 1), m):
                vec = [never] * k
                for p, v in zip(pos, vals):
                    vec[p] = v
                out.append(tuple(vec))
    out.sort()
    return out


def _enumerate_clamped(k: int, D: int) -> list[tuple[int, ...]]:
    out = []
    for m in range(k + 1):
        for pos in itertools.combinations(range(k), m):
            for vals in itertools.permutations(range(1, D), m):
                vec = [D] * k
                for p, v in zip(pos, vals):
                    vec[p] = v
                out.append(tuple(vec))
    out.sort()
    return out


def successor(n: tuple[int, ...], regime: int, M: int,
              D: int | None = None) -> tuple[int, ...]:
    """Counter vector after one step spent in ``regime``.

    Counters advance by one (clamped at D when truncated); if the regime
    just left is AR regime i, counter i restarts at 1.
    """
    k = len(n)
    if not 0 <= regime < M:
        raise StateError(f"regime {regime} outside 0..{M - 1}")
    cap = D if D is not None else _INT64_MAX
    nxt = [min(c + 1, cap) for c in n]
    if regime < k:
        nxt[regime] = 1
    return tuple(nxt)


def predecessors(n: tuple[int, ...], t: int, k: int, M: int,
                 D: int | None = None) -> list[tuple[tuple[int, ...], int]]:
    """Inverse of ``successor``: pairs (previous counters, previous regime).

    A counter equal to 1 identifies the regime occupied at t-1 as that AR
    regime (the reset branch); otherwise the previous regime ranges over
    the non-AR regimes. Only predecessors admissible at time t-1 are
    returned. Raises on vectors that violate the admissibility rules.
    """
    if len(n) != k:
        raise StateError(f"expected {k} counters, got {len(n)}")
    if t < 0:
        raise StateError("t must be >= 0")
    valid = set(enumerate_counters(t, k, D))
    if tuple(n) not in valid:
        raise StateError(f"{tuple(n)} is not admissible at t={t}")
    if t == 0:
        return []
    prev_valid = set(enumerate_counters(t - 1, k, D))
    reset_pos = [i for i, c in enumerate(n) if c == 1]
    if len(reset_pos) > 1:
        raise StateError(f"{tuple(n)} has multiple counters at 1 for t >= 1")

    cap = D if D is not None else _INT64_MAX

    def advance_preimages(idx: int) -> list[int]:
        c = n[idx]
        cands = [c - 1]
        if D is not None and c == cap:
            cands.append(cap)
        return [v for v in cands if v >= 1]

    out = []
    if reset_pos:
        ell = reset_pos[0]
        others = [advance_preimages(i) for i in range(k) if i != ell]
        max_prev = min(t, cap)
        for prev_ell in range(1, max_prev + 1):
            for combo in itertools.product(*others) if others else [()]:
                cand = list(combo[:ell]) + [prev_ell] + list(combo[ell:])
                cand_t = tuple(cand)
                if cand_t in prev_valid and successor(cand_t, ell, M, D) == tuple(n):
                    out.append((cand_t, ell))
    else:
        pre_sets = [advance_preimages(i) for i in range(k)]
        for combo in itertools.product(*pre_sets):
            cand_t = tuple(combo)
            if cand_t not in prev_valid:
                continue
            if tuple(min(c + 1, cap) for c in cand_t) == tuple(n):
                for reg in range(k, M):
                    out.append((cand_t, reg))
    out.sort()
    return out


# ----------------------------------------------------------------------
# layered reachability graph


@dataclass(frozen=True)
class StateGraph:
    """Per-time reachable counter layers plus successor row maps.

    Layers are stored flattened: rows of layer t live at
    ``offsets[t]:offsets[t+1]`` in ``counters`` and ``dens_idx``. For a
    source row at flat position p in layer t-1, ``adv_dst[p]`` and
    ``rst_dst[p, i]`` give the global flat row of its advance successor
    and of its reset-i successor in layer t. ``dens_idx`` is 0 where the
    stationary density applies (never visited, or clamped at the cap) and
    the literal lag m otherwise.
    """

    t_max: int
    k: int
    M: int
    D: int | None
    offsets: np.ndarray      # (t_max+2,) int64
    counters: np.ndarray     # (total, k) int64
    dens_idx: np.ndarray     # (total, k) int64
    adv_dst: np.ndarray      # (offsets[t_max],) int64, -1 when M == k
    rst_dst: np.ndarray      # (offsets[t_max], k) int64

    @property
    def has_iid(self) -> bool:
        return self.M > self.k

    def layer(self, t: int) -> np.ndarray:
        return self.counters[self.offsets[t]:self.offsets[t + 1]]

    def layer_size(self, t: int) -> int:
        return int(self.offsets[t + 1] - self.offsets[t])

    @property
    def peak_layer(self) -> int:
        sizes = np.diff(self.offsets)
        return int(sizes.max())

    @property
    def vmax(self) -> int:
        """Largest counter value that can occur anywhere in the graph."""
        cap = self.D if self.D is not None else self.t_max + 1
        return min(self.t_max + 1, cap)


def build_graph(t_max: int, k: int, M: int, D: int | None = None) -> StateGraph:
    """Construct the reachability graph for time indices 0..t_max."""
    if t_max < 0 or k < 1 or M < k:
        raise StateError(f"bad shape t_max={t_max}, k={k}, M={M}")
    if D is not None and (D < 2 or D <= k):
        raise StateError(f"cap must satisfy D >= 2 and D > k, got D={D}")
    cap = D if D is not None else t_max + 2
    base = np.int64(max(t_max + 2, cap + 1))
    if k * math.log(float(base)) >= 63 * math.log(2.0):
        raise OverflowError("counter encoding exceeds 64-bit range")
    radix = base ** np.arange(k - 1, -1, -1, dtype=np.int64)
    has_iid = M > k

    layers: list[np.ndarray] = [np.ones((1, k), dtype=np.int64)]
    adv_parts: list[np.ndarray] = []
    rst_parts: list[np.ndarray] = []

    for t in range(1, t_max + 1):
        prev = layers[t - 1]
        n = prev.shape[0]
        stepped = np.minimum(prev + 1, cap)
        variants = []
        if has_iid:
            variants.append(stepped)
        for i in range(k):
            v = stepped.copy()
            v[:, i] = 1
            variants.append(v)
        keys = np.concatenate([v @ radix for v in variants])
        uniq, inv = np.unique(keys, return_inverse=True)
        layer = np.empty((uniq.shape[0], k), dtype=np.int64)
        rem = uniq.copy()
        for j in range(k):
            layer[:, j] = rem // radix[j]
            rem = rem % radix[j]
        layers.append(layer)

        pos = 0
        if has_iid:
            adv_parts.append(inv[pos:pos + n].astype(np.int64))
            pos += n
        else:
            adv_parts.append(np.full(n, -1, dtype=np.int64))
        rst = np.empty((n, k), dtype=np.int64)
        for i in range(k):
            rst[:, i] = inv[pos:pos + n]
            pos += n
        rst_parts.append(rst)

    sizes = np.array([la.shape[0] for la in layers], dtype=np.int64)
    offsets = np.zeros(t_max + 2, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    counters = np.concatenate(layers, axis=0)

    # successor maps, shifted to global row indices
    if t_max >= 1:
        if has_iid:
            adv_dst = np.concatenate(
                [p + offsets[t + 1] for t, p in enumerate(adv_parts)])
        else:
            adv_dst = np.full(int(offsets[t_max]), -1, dtype=np.int64)
        rst_dst = np.concatenate(
            [p + offsets[t + 1] for t, p in enumerate(rst_parts)], axis=0)
    else:
        adv_dst = np.empty(0, dtype=np.int64)
        rst_dst = np.empty((0, k), dtype=np.int64)

    dens_idx = counters.copy()
    for t in range(t_max + 1):
        block = dens_idx[offsets[t]:offsets[t + 1]]
        stat = block > t
        if D is not None:
            stat |= block >= D
        block[stat] = 0

    return StateGraph(t_max=t_max, k=k, M=M, D=D, offsets=offsets,
                      counters=counters, dens_idx=dens_idx,
                      adv_dst=adv_dst, rst_dst=rst_dst)
