"""The replicable quad-tree coreset.

Level ``i`` of the tree keeps the children of the previous level's heavy
cells that are themselves heavy hitters of the level-``i`` cell
distribution. Every non-heavy child (light) and every child at the final
level (special) is mapped to one representative point, and the coreset is
the set of representatives with replicably estimated masses.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (BudgetExceededError, NormSpec, as_budget, as_randomness, canonical_json)
from .grid import CellId, centers_of, locate_many, row_lookup
from .primitives import HHParams, r_heavy_hitters, r_mass_estimate
from .sources import write_points_csv


def layer_bound(p, beta, Delta, eps, Lambda) -> int:
    """Smallest ``t >= 1`` with ``(2**(1 - t) * Delta)**p <= eps * Lambda / 5``.

    ``beta`` is accepted for signature symmetry with the other derived
    quantities; the bound is evaluated with ``Lambda`` directly.
    """
    if min(p, Delta, eps, Lambda) <= 0:
        raise ValueError("all arguments must be positive")
    target = eps * Lambda / 5.0
    t = 1
    while (2.0 ** (1 - t) * Delta) ** p > target:
        t += 1
    return t


def shift_eps(eps: float, p: int) -> float:
    """Accuracy used inside the shift budget: ``eps`` for p=1, ``eps**2 / 64`` for p=2."""
    return eps if p == 1 else eps ** 2 / 64.0


@dataclass(frozen=True)
class CoresetParams:
    """Inputs of the coreset construction.

    Parameters
    ----------
    eps, rho, delta : float
        Coreset accuracy, replicability and confidence.
    k : int
        Number of centers the coreset must serve.
    Lambda : float
        Estimate of the optimal cost.
    spec : NormSpec
        Metric, exponent ``p`` (1 or 2) and dimension.
    beta : float
        Approximation ratio of the downstream oracle.
    gamma : float, optional
        Overrides the derived heavy-hitter scale. The derived value is tiny
        and only reachable with astronomically many samples.
    weight_eps : float, optional
        Overrides the per-coordinate mass accuracy ``eps * Lambda / (4 N)``.
    m_cap : float
        Largest admissible near-cell count ``M`` when ``gamma`` is derived.
    """

    eps: float
    k: int
    rho: float
    delta: float
    Lambda: float
    spec: NormSpec
    beta: float = 1.0
    gamma: float = None
    weight_eps: float = None
    m_cap: float = 1e15

    def __post_init__(self):
        if self.spec.p not in (1, 2):
            raise ValueError("coresets are built for p in {1, 2}")
        if not (self.eps > 0 and self.Lambda > 0 and self.k >= 1):
            raise ValueError("eps, Lambda must be positive and k >= 1")
        if not 0 < self.delta < self.rho / 3 < 1 / 3:
            raise ValueError("need 0 < delta < rho/3 < 1/3")

    @property
    def p(self):
        return int(self.spec.p)

    @property
    def Delta(self):
        return self.spec.delta

    @property
    def t(self) -> int:
        return layer_bound(self.p, self.beta, self.Delta, self.eps, self.Lambda)

    @property
    def M(self) -> float:
        return float(math.ceil(32.0 * self.Delta / shift_eps(self.eps, self.p))) ** self.spec.d

    @property
    def gamma_theory(self) -> float:
        return shift_eps(self.eps, self.p) / (5.0 * self.t * self.k * self.M * (2.0 * self.Delta) ** self.p)

    @property
    def gamma_used(self) -> float:
        return self.gamma if self.gamma is not None else self.gamma_theory

    def threshold(self, i: int) -> float:
        return min(1.0, self.gamma_used * self.Lambda * 2.0 ** (self.p * i))

    def size_bound(self) -> float:
        return 2.0 * self.beta / self.gamma_used + self.t * self.k * (7.0 * self.Delta) ** self.spec.d

    def to_dict(self):
        return {"eps": self.eps, "k": self.k, "rho": self.rho, "delta": self.delta,
                "Lambda": self.Lambda, "p": self.p, "norm": self.spec.family.value,
                "d": self.spec.d, "beta": self.beta, "gamma": self.gamma_used,
                "gamma_theory": self.gamma_theory, "t": self.t, "M": self.M,
                "weight_eps": self.weight_eps}


def coreset_derived(params: CoresetParams):
    """``(t, M, gamma, [(v_i, eps_i, rho_i, delta_i) for i = 1..t])``."""
    t = params.t
    if params.gamma is None and params.M > params.m_cap:
        raise BudgetExceededError(
            f"near-cell count M={params.M:.3g} exceeds the cap {params.m_cap:.3g}; "
            "reduce the dimension first or pass an explicit gamma with a budget scale",
            required=params.M)
    levels = []
    for i in range(1, t + 1):
        v = params.threshold(i)
        levels.append((v, v / 2.0, params.rho / t, params.delta / t))
    return t, params.M, params.gamma_used, levels


@dataclass
class QuadTree:
    """Heavy cells per level plus the representative of every heavy cell.

    ``heavy[i]`` is a lex-sorted ``(n_i, d)`` array of level-``i`` cell
    coordinates; ``heavy[0]`` is the root. Light cells at level ``i`` are
    the children of ``heavy[i-1]`` missing from ``heavy[i]``; special cells
    are all children of the deepest heavy level when the depth guard ended
    the loop. ``rep_index[i][j]`` is the coreset index that the heavy cell
    ``heavy[i][j]`` maps to.
    """

    d: int
    heavy: list
    rep_index: list
    reps: np.ndarray
    special_level: int = None
    info: dict = field(default_factory=dict)

    @property
    def depth(self) -> int:
        return len(self.heavy) - 1

    def heavy_cells(self, i):
        return [CellId(i, tuple(r)) for r in self.heavy[i].tolist()]

    def light_cells(self, i):
        """Enumerate light cells at level ``i`` (``2**d`` per heavy parent)."""
        if i < 1 or i > self.depth + 1 or i == self.special_level:
            return []
        kids = _all_children(self.heavy[i - 1], self.d)
        heavy = self.heavy[i] if i <= self.depth else np.zeros((0, self.d), dtype=np.int64)
        keep = row_lookup(heavy, kids) < 0
        return [CellId(i, tuple(r)) for r in kids[keep].tolist()]

    def special_cells(self):
        if self.special_level is None:
            return []
        kids = _all_children(self.heavy[self.special_level - 1], self.d)
        return [CellId(self.special_level, tuple(r)) for r in kids.tolist()]

    def region_index(self, X) -> np.ndarray:
        """Coreset index of each row of ``X`` (its deepest heavy ancestor's representative)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), int(self.rep_index[0][0]), dtype=np.int64)
        alive = np.ones(len(X), dtype=bool)
        for i in range(1, self.depth + 1):
            if not alive.any():
                break
            idx = row_lookup(self.heavy[i], locate_many(X[alive], i))
            hit = idx >= 0
            sel = np.flatnonzero(alive)
            out[sel[hit]] = self.rep_index[i][idx[hit]]
            alive[sel[~hit]] = False
        return out

    def representative_map(self, X) -> np.ndarray:
        return self.reps[self.region_index(X)]


def _all_children(Z, d):
    offs = np.array(np.meshgrid(*[[0, 1]] * d, indexing="ij")).reshape(d, -1).T
    kids = (2 * np.asarray(Z, dtype=np.int64))[:, None, :] + offs[None, :, :]
    return kids.reshape(-1, d)


def _sorted_rows(rows, d):
    if len(rows) == 0:
        return np.zeros((0, d), dtype=np.int64)
    return np.unique(np.asarray(rows, dtype=np.int64).reshape(-1, d), axis=0)


def build_quad_tree(sampler, params: CoresetParams, rng, budget=None) -> QuadTree:
    """Grow the tree level by level, then assign representatives bottom-up.

    ``sampler.draw(n)`` must return ``n`` fresh points of the distribution.
    Each level draws its own samples. The heavy-hitter threshold of level
    ``i`` comes from the ``("level", i)`` substream of ``rng``.
    """
    rng = as_randomness(rng)
    budget = as_budget(budget)
    d = params.spec.d
    t, _, gamma, levels = coreset_derived(params)
    guard = params.eps * params.Lambda / 5.0
    heavy = [np.zeros((1, d), dtype=np.int64)]
    special_level = None
    level_info = []
    i = 1
    while len(heavy[i - 1]) > 0:
        if (2.0 ** (1 - i) * params.Delta) ** params.p <= guard:
            special_level = i
            break
        v, eps_i, rho_i, delta_i = levels[i - 1] if i <= len(levels) else levels[-1]
        parents = heavy[i - 1]
        sentinel = np.full(d, -1, dtype=np.int64)

        def draw(n, _i=i, _parents=parents):
            Z = locate_many(sampler.draw(n), _i)
            outside = row_lookup(_parents, Z >> 1) < 0
            Z[outside] = sentinel
            return Z

        n_dom = len(parents) * 2 ** d
        hp = HHParams(v, eps_i, rho_i, delta_i, domain_bound=n_dom + 1)
        info = {}
        found = r_heavy_hitters(draw, hp, rng.child("level", i), budget,
                                domain=lambda _p=parents: _all_children(_p, d), info=info)
        found = [r for r in found if r[0] >= 0]
        heavy.append(_sorted_rows(found, d))
        level_info.append({"level": i, "v": v, "heavy": len(found), **info})
        i += 1
    if len(heavy[-1]) == 0:
        heavy.pop()
    # bottom-up: a heavy cell without heavy children is its own representative,
    # otherwise it inherits from its lex-smallest heavy child
    rep_pts = [None] * len(heavy)
    marked = []
    for j in range(len(heavy) - 1, -1, -1):
        H = heavy[j]
        rp = np.full((len(H), d), np.nan)
        if j + 1 < len(heavy):
            kids = heavy[j + 1]
            par = row_lookup(H, kids >> 1)
            for c in range(len(kids) - 1, -1, -1):
                rp[par[c]] = rep_pts[j + 1][c]
        own = np.isnan(rp[:, 0])
        rp[own] = centers_of(H[own], j)
        marked.append(rp[own])
        rep_pts[j] = rp
    reps = np.unique(np.concatenate(marked), axis=0)
    rep_index = [row_lookup_float(reps, rp) for rp in rep_pts]
    info = {"t": t, "gamma": gamma, "depth": len(heavy) - 1, "special_level": special_level,
            "levels": level_info}
    return QuadTree(d, heavy, rep_index, reps, special_level, info)


def row_lookup_float(keys, rows):
    """Exact-match lookup of float rows in lex-sorted unique ``keys``."""
    both = np.concatenate([keys, rows])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.ravel()
    pos = np.full(inv.max() + 1, -1, dtype=np.int64)
    pos[inv[:len(keys)]] = np.arange(len(keys))
    return pos[inv[len(keys):]]


@dataclass
class WeightedCoreset:
    """Representative points with probability weights and a provenance record."""

    reps: np.ndarray
    weights: np.ndarray
    provenance: dict = field(default_factory=dict)
    tree: QuadTree = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.reps)

    def cost(self, centers, spec: NormSpec) -> float:
        from .oracle import clustering_cost
        return clustering_cost(self.reps, centers, spec, self.weights)

    def artifact(self) -> dict:
        """The replicated content: points and weights only."""
        return {"reps": self.reps.tolist(), "weights": self.weights.tolist()}

    def to_json(self) -> str:
        return canonical_json({"reps": self.reps, "weights": self.weights,
                               "provenance": self.provenance})

    def save(self, prefix) -> tuple:
        """Write ``<prefix>.csv`` (points and weights) and ``<prefix>.json`` (provenance)."""
        prefix = Path(prefix)
        csv_path, json_path = prefix.with_suffix(".csv"), prefix.with_suffix(".json")
        write_points_csv(csv_path, self.reps, self.weights)
        json_path.write_text(canonical_json(self.provenance) + "\n")
        return csv_path, json_path

    @classmethod
    def load(cls, prefix) -> "WeightedCoreset":
        from .sources import read_points_csv
        prefix = Path(prefix)
        X, w = read_points_csv(prefix.with_suffix(".csv"))
        prov = json.loads(prefix.with_suffix(".json").read_text())
        return cls(X, w, prov)


def build_coreset(sampler, params: CoresetParams, rng, budget=None, tree=None,
                  weight_budget=None) -> WeightedCoreset:
    """Build the tree, then estimate the mass of every representative's region.

    Mass estimation draws fresh points, maps each to its representative and
    runs the replicable multinomial estimator over the sorted representatives.
    ``weight_budget`` sizes that stage separately (default: ``budget``).
    """
    rng = as_randomness(rng)
    budget = as_budget(budget)
    weight_budget = budget if weight_budget is None else as_budget(weight_budget)
    if tree is None:
        tree = build_quad_tree(sampler, params, rng.child("tree"), budget)
    N = len(tree.reps)
    bound = params.size_bound()
    if N > bound:
        raise AssertionError(f"coreset size {N} exceeds its bound {bound}")
    w_eps = params.weight_eps if params.weight_eps is not None else params.eps * params.Lambda / (4.0 * N)
    mass_info = {}
    weights = r_mass_estimate(lambda n: tree.region_index(sampler.draw(n)), N, w_eps,
                              params.rho, params.delta, rng.child("weights"), weight_budget,
                              info=mass_info)
    n_used = budget.total() + (weight_budget.total() if weight_budget is not budget else 0)
    prov = {"params": params.to_dict(), "t": tree.info["t"], "depth": tree.depth,
            "special_level": tree.special_level, "size": N, "size_bound": bound,
            "weight_eps": w_eps, "weight_samples": mass_info.get("n_samples", 0),
            "heavy_per_level": [len(h) for h in tree.heavy], "samples": n_used}
    return WeightedCoreset(tree.reps, weights, prov, tree)
