"""Replicable statistical k-centers on a fixed grid.

Samples are counted per grid cell, cells whose empirical mass clears a
shared random threshold are kept, and the k-centers oracle runs on their
centers. Replicability and coverage rest on a coverage assumption about
the source (every cluster of some good solution shows up in ``n`` samples
with probability ``q``). The library cannot check that assumption from
data; callers and test fixtures supply ``n`` and ``q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BudgetExceededError, Norm, NormSpec, as_generator, as_randomness, delta
from .grid import CellId, FixedGrid, cell_center
from .oracle import OracleSpec
from .primitives import _unique_rows


CHUNK = 1 << 20  # samples counted per batch, bounding memory for large N


def cell_count_bound(c, beta, B, opt_bound, Delta, d) -> float:
    """Cells meeting one cluster of a ``(beta, B)``-approximate solution.

    Returns ``min(((c + 2 c Delta + 2 (beta opt_bound + B)) / c) ** d, (1/c) ** d)``;
    the second term counts every cell of the unit cube.
    """
    if min(c, beta, Delta) <= 0 or B < 0 or d < 1:
        raise ValueError("c, beta and Delta must be positive, B nonnegative, d >= 1")
    if not 0 < opt_bound <= 1:
        raise ValueError("opt_bound must lie in (0, 1]")
    local = ((c + 2.0 * c * Delta + 2.0 * (beta * opt_bound + B)) / c) ** d
    return min(local, math.ceil(1.0 / c - 1e-12) ** d)


def _dyadic_level(c: float) -> int:
    level = round(-math.log2(c))
    if level < 0 or 2.0 ** -level != c:
        raise ValueError(f"grid side must be 2**-l for an integer l >= 0, got {c}")
    return level


@dataclass(frozen=True)
class KCentersParams:
    """Grid side ``c`` plus the coverage assumption ``(n, q, beta, B)``.

    Parameters
    ----------
    c : float
        Grid side, a power of two at most 1 so that active cells are
        ordinary dyadic cells.
    k : int
    n : int
        Sample size under which every cluster of the assumed solution is
        observed with probability ``q``.
    q : float
    beta, B : float
        Quality of the assumed solution.
    rho, delta : float
    d : int
    family : Norm, default L2
    opt_bound : float, default 1
        Upper bound on OPT used in the cell count.
    budget_scale : float, default 1e-6
        Multiplies ``m`` (and so ``N``).
    hard_cap : int, default 10**8
        Largest ``N`` allowed.
    """

    c: float
    k: int
    n: int
    q: float
    rho: float
    delta: float
    d: int
    beta: float = 1.0
    B: float = 0.0
    family: Norm = Norm.L2
    opt_bound: float = 1.0
    budget_scale: float = 1e-6
    hard_cap: int = 10 ** 8

    def __post_init__(self):
        object.__setattr__(self, "family", Norm.parse(self.family))
        _dyadic_level(self.c)
        if self.k < 1 or self.n < 1:
            raise ValueError("k and n must be >= 1")
        if not 0 < self.q <= 1:
            raise ValueError("q must lie in (0, 1]")
        if not (0 < self.rho < 1 and 0 < self.delta < 1):
            raise ValueError("rho and delta must lie in (0, 1)")
        if not self.budget_scale > 0:
            raise ValueError("budget_scale must be positive")

    @property
    def level(self) -> int:
        return _dyadic_level(self.c)

    @property
    def spec(self) -> NormSpec:
        return NormSpec(self.family, math.inf, self.d)

    @property
    def Delta(self) -> float:
        return delta(self.spec)

    @property
    def lam(self) -> float:
        return (1.0 + math.log(5.0 / self.delta)) / self.q

    @property
    def M(self) -> float:
        return cell_count_bound(self.c, self.beta, self.B, self.opt_bound, self.Delta, self.d)

    @property
    def m(self) -> int:
        M, L = self.M, math.log(5.0 / self.delta)
        core = self.n * M * L + self.n * self.k * M * M * math.log(2.0)
        return max(1, math.ceil(self.budget_scale * 400.0 * self.lam * core / self.rho ** 2))

    @property
    def N(self) -> int:
        return max(1, math.ceil(self.lam * self.n * self.m * self.M))

    def to_dict(self):
        return {"c": self.c, "k": self.k, "n": self.n, "q": self.q, "rho": self.rho,
                "delta": self.delta, "d": self.d, "beta": self.beta, "B": self.B,
                "family": self.family.value, "opt_bound": self.opt_bound,
                "budget_scale": self.budget_scale, "lambda": self.lam, "M": self.M,
                "m": self.m, "N": self.N}


def kcenters_bound(opt, Delta, c, beta=1.0, B=0.0, beta_hat=2.0, B_hat=0.0) -> float:
    """``(2 beta + beta_hat) opt + 2 B + B_hat + (4 beta + 2 beta_hat + 1) c Delta``."""
    return ((2 * beta + beta_hat) * opt + 2 * B + B_hat
            + (4 * beta + 2 * beta_hat + 1) * c * Delta)


def r_active_cells(source, params: KCentersParams, rng, data_rng=None, info=None) -> list:
    """Grid cells whose empirical mass reaches a shared random threshold.

    Draws ``params.N`` samples from the data stream in batches of
    ``CHUNK``, counts them per cell and keeps cells with ``Z / N >= v`` for ``v ~ U[0, m/N]`` drawn from
    ``rng``.

    Returns
    -------
    list of CellId
        Sorted by coordinates, all at level ``params.level``.

    Raises
    ------
    BudgetExceededError
        When ``N`` exceeds ``params.hard_cap``.
    """
    from .pipelines import _as_sampler

    N = params.N
    if N > params.hard_cap:
        raise BudgetExceededError(
            f"active cells need N={N} samples, above the hard cap {params.hard_cap}; "
            "use a larger grid side c or a smaller budget_scale", required=N)
    sampler = _as_sampler(source, data_rng)
    grid = FixedGrid(params.c)
    tally = {}
    for start in range(0, N, CHUNK):
        X = np.asarray(sampler.draw(min(CHUNK, N - start)), dtype=float)
        rows, cnt = _unique_rows(grid.coords_of(X))
        for z, c in zip(map(tuple, rows.tolist()), cnt.tolist()):
            tally[z] = tally.get(z, 0) + c
    keys = sorted(tally)
    cells = np.array(keys, dtype=np.int64).reshape(len(keys), -1)
    counts = np.array([tally[z] for z in keys])
    v = as_generator(rng).uniform(0.0, params.m / N)
    keep = counts / N >= v
    if info is not None:
        info.update(N=N, m=params.m, threshold=float(v), occupied=len(cells),
                    active=int(keep.sum()))
    return [CellId(params.level, tuple(z)) for z in cells[keep].tolist()]


def oracle_with_grid(oracle: OracleSpec, points, c, k: int, spec: NormSpec, rng=None) -> np.ndarray:
    """Snap points to fixed-grid cell centers, deduplicate, and run the oracle."""
    X = np.atleast_2d(np.asarray(points, dtype=float))
    snapped = np.unique(FixedGrid(c).snap(X), axis=0)
    return oracle.solve(snapped, None, k, spec, as_randomness(0 if rng is None else rng))


def r_kcenters(source, params: KCentersParams, oracle: OracleSpec = None, rng=0,
               data_rng=None, info=None) -> np.ndarray:
    """Replicable k-centers: active cells, then the oracle on their centers.

    With the greedy oracle the output is a subset of the active cell
    centers, so it lies on the lattice of grid-cell centers.
    """
    oracle = OracleSpec("greedy_kcenters", beta=2.0) if oracle is None else oracle
    rng = as_randomness(rng)
    cells = r_active_cells(source, params, rng.child("threshold"), data_rng, info)
    pts = np.array([cell_center(z) for z in cells])
    return oracle.solve(pts, None, params.k, params.spec, rng.child("oracle"))
