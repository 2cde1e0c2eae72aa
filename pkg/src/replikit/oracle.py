"""Combinatorial clustering oracles and cost evaluation.

Every oracle is deterministic given its inputs and random stream, which is
what lets two executions that agree on the coreset also agree on the
centers. Ties in argmin/argmax always resolve to the lowest index.
"""

from __future__ import annotations

import itertools
import math
import subprocess
from dataclasses import dataclass, field

import numpy as np

from .core import Norm, NormSpec, ReplikitError, SharedRandomness, as_generator, pairwise_distances


def _prep(X, weights=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if weights is None:
        w = np.full(len(X), 1.0 / len(X))
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(X),):
            raise ValueError("weights must have one entry per point")
        if (w < 0).any():
            raise ValueError("weights must be nonnegative")
    return X, w


def _power_dist(X, centers, spec: NormSpec):
    """Distances raised to ``p`` (plain distances when ``p`` is infinite)."""
    if spec.family is Norm.L2 and spec.p != math.inf:
        D2 = np.zeros((len(X), len(centers)))
        for c in range(X.shape[1]):
            diff = X[:, c, None] - centers[None, :, c]
            D2 += diff * diff
        return D2 if spec.p == 2 else D2 ** (spec.p / 2.0)
    D = pairwise_distances(X, centers, spec.family)
    return D if spec.p in (1, math.inf) else D ** spec.p


def assign(X, centers, spec: NormSpec):
    """Nearest-center labels and distances (lowest center index wins ties)."""
    D = pairwise_distances(X, centers, spec.family)
    lab = np.argmin(D, axis=1)
    return lab, D[np.arange(len(D)), lab]


def _assign_cost(X, centers, spec):
    P = _power_dist(X, centers, spec)
    lab = np.argmin(P, axis=1)
    return lab, P[np.arange(len(P)), lab]


def clustering_cost(X, centers, spec: NormSpec, weights=None) -> float:
    """Weighted ``sum w_i min_f dist(x_i, f)**p``; the max distance when ``p`` is infinite.

    Weights default to uniform, so the value is the mean cost of the sample.
    """
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if centers.size == 0:
        raise ValueError("need at least one center")
    X, w = _prep(X, weights)
    _, dist = assign(X, centers, spec)
    if spec.p == math.inf:
        return float(dist[w > 0].max()) if (w > 0).any() else 0.0
    return float((w * dist ** spec.p).sum())


def weighted_median(values, weights) -> float:
    """Lower weighted median: first value whose cumulative weight reaches half."""
    order = np.argsort(values, kind="stable")
    v, cw = values[order], np.cumsum(weights[order])
    j = int(np.searchsorted(cw, cw[-1] / 2.0 * (1 - 1e-12), side="left"))
    return float(v[min(j, len(v) - 1)])


@dataclass
class LloydResult:
    centers: np.ndarray
    cost: float
    n_iter: int
    duplicates: bool
    trace: list = field(default_factory=list)


def kpp_seed(X, w, k, spec: NormSpec, gen):
    """k-means++ style seeding with probabilities ``w * D**p``."""
    first = int(np.searchsorted(np.cumsum(w) / w.sum(), gen.random(), side="right"))
    idx = [min(first, len(X) - 1)]
    dup = False
    dist = _power_dist(X, X[idx[0]][None, :], spec)[:, 0]
    for _ in range(1, k):
        score = w * dist
        tot = score.sum()
        if tot <= 0:
            dup = True
            j = idx[0]
        else:
            j = int(np.searchsorted(np.cumsum(score) / tot, gen.random(), side="right"))
            j = min(j, len(X) - 1)
        idx.append(j)
        dist = np.minimum(dist, _power_dist(X, X[j][None, :], spec)[:, 0])
    return X[idx].copy(), dup


def _update(X, w, lab, centers, p):
    k = len(centers)
    new = centers.copy()
    if p == 2:
        tot = np.bincount(lab, weights=w, minlength=k)
        ok = tot > 0
        for c in range(X.shape[1]):
            s = np.bincount(lab, weights=w * X[:, c], minlength=k)
            new[ok, c] = s[ok] / tot[ok]
        return new
    for j in range(k):
        m = lab == j
        wm = w[m]
        if not m.any() or wm.sum() <= 0:
            continue
        new[j] = [weighted_median(X[m][:, c], wm) for c in range(X.shape[1])]
    return new


def weighted_kpp_lloyd(X, weights, k: int, spec: NormSpec, rng, max_iters: int = 100,
                       n_init: int = 1, tol: float = 1e-6) -> LloydResult:
    """Weighted k-means++ seeding followed by Lloyd iterations.

    The update step is the weighted mean for ``p = 2`` and the
    coordinate-wise weighted median otherwise. Iteration stops when the
    assignment is unchanged, the cost improves by less than ``tol``
    (relative), or after ``max_iters`` steps. The best iterate seen is
    returned, so the reported cost never exceeds the seeding cost. With
    ``n_init > 1`` the cheapest of several restarts is kept.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    X, w = _prep(X, weights)
    if w.sum() <= 0:
        raise ValueError("weights must have positive sum")
    gen = as_generator(rng)
    best = None
    for _ in range(max(1, n_init)):
        centers, dup = kpp_seed(X, w, k, spec, gen)
        lab, dp = _assign_cost(X, centers, spec)
        cost = float((w * dp).sum())
        trace = [cost]
        cur_best = (cost, centers)
        it = 0
        for it in range(1, max_iters + 1):
            centers = _update(X, w, lab, centers, spec.p)
            new_lab, dp = _assign_cost(X, centers, spec)
            cost = float((w * dp).sum())
            trace.append(cost)
            stalled = trace[-2] - cost <= tol * trace[-2]
            if cost < cur_best[0]:
                cur_best = (cost, centers)
            if np.array_equal(new_lab, lab) or stalled:
                break
            lab = new_lab
        res = LloydResult(cur_best[1], cur_best[0], it, dup, trace)
        if best is None or res.cost < best.cost:
            best = res
    return best


def greedy_kcenters(X, k: int, spec: NormSpec) -> np.ndarray:
    """Farthest-first traversal from the lexicographically smallest point."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if len(X) == 0:
        raise ValueError("need at least one point")
    start = int(np.lexsort(X.T[::-1])[0])
    idx = [start]
    dist = pairwise_distances(X, X[start][None, :], spec.family)[:, 0]
    while len(idx) < k and dist.max() > 0:
        j = int(np.argmax(dist))
        idx.append(j)
        dist = np.minimum(dist, pairwise_distances(X, X[j][None, :], spec.family)[:, 0])
    return X[idx].copy()


def _lex_sorted_unique(C):
    C = np.unique(np.atleast_2d(np.asarray(C, dtype=float)), axis=0)
    return C


def brute_force_opt(X, weights, k: int, spec: NormSpec, candidates=None,
                    max_subsets: int = 10 ** 6, chunk: int = 4096):
    """Exact minimum cost over all ``k``-subsets of ``candidates``.

    Candidates default to the distinct input points. Subsets are scanned in
    lexicographic order of the sorted candidate list and the first minimum
    is kept.

    Returns
    -------
    cost : float
    centers : ndarray of shape (k, d)
    """
    X, w = _prep(X, weights)
    C = _lex_sorted_unique(X if candidates is None else candidates)
    k_eff = min(k, len(C))
    n_sub = math.comb(len(C), k_eff)
    if n_sub > max_subsets:
        raise ReplikitError(f"{n_sub} candidate subsets exceed the cap {max_subsets}")
    D = pairwise_distances(X, C, spec.family)
    inf = spec.p == math.inf
    if not inf:
        D = D ** spec.p
    best_cost, best = math.inf, None
    combos = itertools.combinations(range(len(C)), k_eff)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        M = D[:, block].min(axis=2)
        costs = M[w > 0].max(axis=0) if inf else (w[:, None] * M).sum(axis=0)
        j = int(np.argmin(costs))
        if costs[j] < best_cost:
            best_cost, best = float(costs[j]), block[j]
    return best_cost, C[best].copy()


def opt_kmeans_partitions(X, weights, k: int = 2):
    """Exact weighted k-means optimum under L2 by enumerating 2-partitions.

    Only ``k = 2`` (and the trivial ``k = 1``) are supported; the optimal
    center of each part is its weighted centroid.
    """
    X, w = _prep(X, weights)
    tot_w = w.sum()
    sq = float(np.dot(w, (X * X).sum(axis=1)))
    s_all = (w[:, None] * X).sum(axis=0)
    if k == 1:
        return sq - float(s_all @ s_all) / tot_w
    if k != 2:
        raise ValueError("partition enumeration supports k <= 2")
    n = len(X)
    if n > 24:
        raise ReplikitError("partition enumeration limited to 24 points")
    best = sq - float(s_all @ s_all) / tot_w
    wx = w[:, None] * X
    bits = np.arange(n - 1)
    for start in range(0, 1 << (n - 1), 1 << 16):
        masks = np.arange(start, min(start + (1 << 16), 1 << (n - 1)), dtype=np.int64)
        A = ((masks[:, None] >> bits) & 1).astype(float)
        A = np.concatenate([A, np.zeros((len(A), 1))], axis=1)  # last point fixed in part B
        wa = A @ w
        sa = A @ wx
        sb = s_all - sa
        wb = tot_w - wa
        with np.errstate(divide="ignore", invalid="ignore"):
            ca = np.where(wa > 0, (sa * sa).sum(axis=1) / wa, 0.0)
            cb = np.where(wb > 0, (sb * sb).sum(axis=1) / wb, 0.0)
        best = min(best, float((sq - ca - cb).min()))
    return max(best, 0.0)


def opt_kmedians_l1(X, weights, k: int, max_subsets: int = 10 ** 6):
    """Exact weighted k-medians optimum under L1.

    Some optimal solution places every center coordinate at a data
    coordinate, so brute force over that product grid is exact.
    """
    X, w = _prep(X, weights)
    axes = [np.unique(X[:, j]) for j in range(X.shape[1])]
    grid = np.array(list(itertools.product(*axes)), dtype=float)
    return brute_force_opt(X, w, k, NormSpec("l1", 1, X.shape[1]), candidates=grid,
                           max_subsets=max_subsets)


def opt_kcenters_1d(x, k: int) -> float:
    """Exact continuous k-centers radius for points on a line."""
    x = np.sort(np.unique(np.asarray(x, dtype=float).ravel()))
    if k >= len(x):
        return 0.0
    gaps = [(x[j] - x[i]) / 2.0 for i in range(len(x)) for j in range(i, len(x))]
    for r in sorted(set(gaps)):
        used, i = 0, 0
        while i < len(x):
            used += 1
            reach = x[i] + 2 * r + 1e-15
            while i < len(x) and x[i] <= reach:
                i += 1
        if used <= k:
            return float(r)
    return float(gaps[-1])


ORACLE_KINDS = ("kmeanspp_lloyd", "kmedianspp_lloyd", "greedy_kcenters", "brute_force", "subprocess")


@dataclass(frozen=True)
class OracleSpec:
    """A black-box solver with its claimed quality ``(beta, B)``.

    ``kind`` is one of ``kmeanspp_lloyd``, ``kmedianspp_lloyd``,
    ``greedy_kcenters``, ``brute_force`` or ``subprocess``. For the
    subprocess kind, ``command`` is the argv; ``replicate`` switches to
    unweighted input where each point is repeated ``round(w * replicate)``
    times.
    """

    kind: str = "kmeanspp_lloyd"
    beta: float = 1.0
    B: float = 0.0
    max_iters: int = 100
    n_init: int = 4
    tol: float = 1e-6
    command: tuple = None
    replicate: int = None
    timeout: float = 600.0

    def __post_init__(self):
        if self.kind not in ORACLE_KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.beta < 1:
            raise ValueError("beta must be >= 1")
        if self.kind == "brute_force" and self.beta != 1:
            raise ValueError("the brute-force oracle is exact: beta must be 1")
        if self.kind == "subprocess" and not self.command:
            raise ValueError("subprocess oracle needs a command")
        if self.command is not None:
            object.__setattr__(self, "command", tuple(self.command))

    def solve(self, X, weights, k: int, spec: NormSpec, rng) -> np.ndarray:
        X, w = _prep(X, weights)
        if self.kind in ("kmeanspp_lloyd", "kmedianspp_lloyd"):
            if spec.p == math.inf:
                raise ValueError(f"{self.kind} does not solve the k-centers objective")
            return weighted_kpp_lloyd(X, w, k, spec, rng, self.max_iters, self.n_init,
                                      self.tol).centers
        if self.kind == "greedy_kcenters":
            return greedy_kcenters(X[w > 0], k, spec)
        if self.kind == "brute_force":
            return brute_force_opt(X, w, k, spec)[1]
        return subprocess_oracle(self.command, X, w, k, spec, rng, self.replicate, self.timeout)

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta, "B": self.B, "max_iters": self.max_iters,
                "n_init": self.n_init, "tol": self.tol, "command": list(self.command) if self.command else None,
                "replicate": self.replicate}


def oracle_from_dict(cfg) -> OracleSpec:
    return OracleSpec(**{k: v for k, v in dict(cfg).items() if v is not None})


def _seed_of(rng) -> int:
    if isinstance(rng, SharedRandomness):
        return rng.seed
    return int(as_generator(rng).integers(0, 2 ** 63))


def subprocess_oracle(command, X, w, k, spec, rng, replicate=None, timeout=600.0):
    """Run an external solver over the CSV contract.

    stdin carries ``#k=<k> p=<p> seed=<u64>``, a header ``x0..x{d-1},w``
    and one row per point; stdout must hold ``k`` rows of coordinates,
    optionally preceded by a header line.
    """
    if replicate:
        reps = np.rint(w / w.sum() * replicate).astype(int)
        X = np.repeat(X, reps, axis=0)
        w = np.ones(len(X))
    d = X.shape[1]
    p = "inf" if spec.p == math.inf else int(spec.p)
    lines = [f"#k={k} p={p} seed={_seed_of(rng)}",
             ",".join([f"x{j}" for j in range(d)] + ["w"])]
    lines += [",".join(repr(float(v)) for v in (*row, wi)) for row, wi in zip(X, w)]
    try:
        proc = subprocess.run(list(command), input="\n".join(lines) + "\n", text=True,
                              capture_output=True, timeout=timeout, check=False)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise ReplikitError(f"external oracle failed to run: {exc}") from exc
    if proc.returncode != 0:
        raise ReplikitError(f"external oracle exited with {proc.returncode}: {proc.stderr.strip()}")
    rows = [ln for ln in proc.stdout.splitlines() if ln.strip() and not ln.startswith("#")]
    if rows and rows[0].lstrip().startswith("x"):
        rows = rows[1:]
    try:
        C = np.array([[float(v) for v in r.split(",")] for r in rows], dtype=float)
    except ValueError as exc:
        raise ReplikitError(f"external oracle returned malformed output: {exc}") from exc
    if C.shape != (k, d):
        raise ReplikitError(f"external oracle returned shape {C.shape}, expected {(k, d)}")
    return C
