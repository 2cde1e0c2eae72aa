"""Replicable statistical primitives.

All four routines split their randomness the same way: samples come from a
caller-supplied ``draw(n)`` (the data stream, fresh per execution) and every
other random choice comes from ``rng`` (the internal stream, shared by
paired executions).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import as_budget, as_generator


@dataclass(frozen=True)
class HHParams:
    """Heavy-hitter target ``v``, error ``eps``, replicability ``rho``, confidence ``delta``."""

    v: float
    eps: float
    rho: float
    delta: float
    domain_bound: int = None

    def __post_init__(self):
        if not 0 < self.eps < self.v <= 1:
            raise ValueError(f"need 0 < eps < v <= 1, got eps={self.eps}, v={self.v}")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 < self.delta < self.rho / 3:
            raise ValueError("delta must lie in (0, rho/3)")

    @property
    def n_candidates(self) -> float:
        gap = self.v - self.eps
        return math.log(2.0 / (self.delta * gap)) / gap

    def n_estimate(self, n_labels: int) -> float:
        num = 648.0 * math.log(2.0 / self.delta) + 648.0 * (n_labels + 1) * math.log(2.0)
        return num / (self.rho ** 2 * self.eps ** 2)


@dataclass(frozen=True)
class RoundingParams:
    """Interval width ``alpha`` and tolerated input error ``eps_prime`` for a target ``eps``."""

    eps: float
    rho: float
    delta: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if not 0 <= self.delta < self.rho / 2:
            raise ValueError("delta must lie in [0, rho/2)")

    @property
    def alpha(self) -> float:
        return 2.0 * self.eps / (self.rho + 1.0 - 2.0 * self.delta)

    @property
    def eps_prime(self) -> float:
        return self.eps * (self.rho - 2.0 * self.delta) / (self.rho + 1.0 - 2.0 * self.delta)


def _labels(arr):
    """Hashable labels for a draw: scalars for 1-D arrays, tuples for rows."""
    arr = np.asarray(arr)
    if arr.ndim == 1:
        return arr.tolist()
    return [tuple(r) for r in arr.tolist()]


def _unique_rows(arr):
    """``np.unique(arr, axis=0, return_counts=True)``, packing small integer rows first."""
    if np.issubdtype(arr.dtype, np.integer) and arr.size:
        lo = int(arr.min())
        shifted = arr.astype(np.int64) - lo
        bits = max(int(shifted.max()), 1).bit_length()
        d = arr.shape[1]
        if bits * d <= 62:
            key = np.zeros(len(arr), dtype=np.int64)
            for j in range(d):
                key = (key << bits) | shifted[:, j]
            ukey, cnt = np.unique(key, return_counts=True)
            rows = np.empty((len(ukey), d), dtype=np.int64)
            mask = (1 << bits) - 1
            for j in range(d - 1, -1, -1):
                rows[:, j] = ukey & mask
                ukey = ukey >> bits
            return rows + lo, cnt
    return np.unique(arr, axis=0, return_counts=True)


def _count(arr):
    arr = np.asarray(arr)
    if arr.ndim == 1:
        uniq, cnt = np.unique(arr, return_counts=True)
    else:
        uniq, cnt = _unique_rows(arr)
    return dict(zip(_labels(uniq), cnt.tolist()))


def r_heavy_hitters(draw, params: HHParams, rng, budget=None, domain=None, info=None):
    """Replicable heavy hitters over a countable label space.

    Parameters
    ----------
    draw : callable
        ``draw(n)`` returns ``n`` i.i.d. labels, either a 1-D array of
        sortable scalars or a 2-D integer array whose rows are the labels.
    params : HHParams
    rng : SharedRandomness or numpy.random.Generator
        Internal stream; only the threshold ``v'`` is drawn from it.
    budget : Budget or float, optional
        Scales the estimation-phase sample count. The candidate phase is
        cheap and always runs at its nominal size.
    domain : sequence or callable, optional
        The whole label space. Used instead of the candidate phase when
        ``params.domain_bound`` is known and smaller than that phase.
    info : dict, optional
        Filled with sample counts, the threshold and candidate count.

    Returns
    -------
    list
        Labels with empirical mass at least ``v'``, in sorted order. Samples
        outside the candidate set count toward a reserved overflow label
        that is never returned.
    """
    budget = as_budget(budget)
    gen = as_generator(rng)
    n_cand = math.ceil(params.n_candidates)
    if domain is not None and params.domain_bound is not None and params.domain_bound < n_cand:
        cands = domain() if callable(domain) else domain
        cands = sorted(_labels(np.asarray(cands)))
        n_cand_used = 0
    else:
        n_cand_used = n_cand
        if budget.max_samples is not None:
            n_cand_used = min(n_cand_used, int(budget.max_samples))
        budget.log.append(("hh.candidates", float(n_cand), n_cand_used))
        cands = sorted(_count(draw(n_cand_used)))
    n_est = budget.size("hh.estimate", params.n_estimate(len(cands)))
    counts = _count(draw(n_est))
    v_prime = gen.uniform(params.v - 2.0 * params.eps / 3.0, params.v - params.eps / 3.0)
    out = [x for x in cands if counts.get(x, 0) / n_est >= v_prime]
    if info is not None:
        overflow = n_est - sum(counts.get(x, 0) for x in cands)
        info.update(n_candidates=n_cand_used, n_estimate=n_est, threshold=float(v_prime),
                    candidates=len(cands), overflow=overflow)
    return out


def r_round(values, params: RoundingParams, rng) -> np.ndarray:
    """Round each value to the midpoint of a randomly offset interval grid.

    One offset per coordinate is drawn uniformly from ``[0, alpha]`` in
    index order. Every output lies within ``alpha / 2`` of its input.
    """
    g = np.atleast_1d(np.asarray(values, dtype=float))
    gen = as_generator(rng)
    a = params.alpha
    return round_with_offsets(g, gen.uniform(0.0, a, size=g.shape), a)


def round_with_offsets(values, offsets, alpha) -> np.ndarray:
    """Midpoint of the interval ``[o + z*alpha, o + (z+1)*alpha)`` containing each value."""
    g = np.asarray(values, dtype=float)
    off = np.asarray(offsets, dtype=float)
    return off + (np.floor((g - off) / alpha) + 0.5) * alpha


def project_simplex(p) -> np.ndarray:
    """Euclidean projection onto the probability simplex with an exact sum.

    When no coordinate needs clamping this subtracts ``(sum - 1) / N`` from
    every entry. The final floating-point residual goes to the largest entry
    (lowest index on ties).
    """
    p = np.asarray(p, dtype=float)
    n = len(p)
    u = np.sort(p)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, n + 1)
    cond = u - css / idx > 0
    r = int(idx[cond][-1]) if cond.any() else n
    theta = css[r - 1] / r
    out = np.maximum(p - theta, 0.0)
    j = int(np.argmax(out))
    out[j] += 1.0 - out.sum()
    if out[j] < 0:
        out[:] = 0.0
        out[j] = 1.0
    return out


def mass_estimate_size(N: int, eps: float, rho: float, delta: float) -> float:
    return 8.0 * (math.log(1.0 / delta) + N * math.log(2.0)) / ((eps / 2.0) ** 2 * (rho - 2.0 * delta) ** 2)


def r_mass_estimate(draw, N: int, eps: float, rho: float, delta: float, rng, budget=None,
                    info=None) -> np.ndarray:
    """Replicable estimate of a multinomial over labels ``0..N-1``.

    Empirical frequencies are rounded with accuracy ``eps / 2``, clamped at
    zero and renormalized, so the output is always a probability vector.
    """
    if N < 1:
        raise ValueError("need at least one label")
    if not 0 < delta < rho / 3:
        raise ValueError("delta must lie in (0, rho/3)")
    if N == 1:
        return np.ones(1)
    budget = as_budget(budget)
    n = budget.size("mass", mass_estimate_size(N, eps, rho, delta))
    labels = np.asarray(draw(n), dtype=np.int64)
    if labels.size and (labels.min() < 0 or labels.max() >= N):
        raise ValueError("draw returned labels outside 0..N-1")
    freq = np.bincount(labels, minlength=N) / n
    rounded = r_round(freq, RoundingParams(eps / 2.0, rho, delta), rng)
    if info is not None:
        info.update(n_samples=n, raw=freq.copy(), rounded=rounded.copy())
    return project_simplex(np.maximum(rounded, 0.0))


def sq_size(eps: float, rho: float, delta: float) -> float:
    eps_prime = RoundingParams(eps, rho, delta).eps_prime
    return math.log(2.0 / delta) / (2.0 * eps_prime ** 2)


def r_sq(query, draw, eps: float, rho: float, delta: float, rng, budget=None) -> float:
    """Replicable statistical query: a rounded sample mean of ``query``.

    ``query`` maps an ``(n, d)`` sample to ``n`` values in ``[0, 1]``.
    """
    if not 0 < delta < rho / 3:
        raise ValueError("delta must lie in (0, rho/3)")
    budget = as_budget(budget)
    n = budget.size("sq", sq_size(eps, rho, delta))
    vals = np.asarray(query(draw(n)), dtype=float)
    if vals.shape != (n,):
        raise ValueError(f"query must return {n} values, got shape {vals.shape}")
    if (vals < 0).any() or (vals > 1).any():
        raise ValueError("query values must lie in [0, 1]")
    return float(r_round([vals.mean()], RoundingParams(eps, rho, delta), rng)[0])
