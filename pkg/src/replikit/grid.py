"""Hierarchical dyadic grids over the cube ``[-1/2, 1/2]^d`` and fixed grids.

Cells are virtual: only visited cells are ever built, addressed by
``(level, coords)``. Every enumeration is sorted by that key.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import NormSpec, delta


@dataclass(frozen=True, order=True)
class CellId:
    """A dyadic cell: side ``2**-level``, integer ``coords`` in ``[0, 2**level)``."""

    level: int
    coords: tuple

    def __post_init__(self):
        object.__setattr__(self, "coords", tuple(int(z) for z in self.coords))
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        hi = 1 << self.level
        if any(z < 0 or z >= hi for z in self.coords):
            raise ValueError(f"coords {self.coords} out of range for level {self.level}")

    @property
    def d(self):
        return len(self.coords)

    @property
    def side(self):
        return 2.0 ** -self.level

    def parent(self):
        if self.level == 0:
            raise ValueError("the root cell has no parent")
        return CellId(self.level - 1, tuple(z >> 1 for z in self.coords))

    def contains(self, other: "CellId") -> bool:
        """True when ``other`` is this cell or one of its descendants."""
        if other.level < self.level:
            return False
        shift = other.level - self.level
        return all((z >> shift) == y for z, y in zip(other.coords, self.coords))

    def __str__(self):
        return f"{self.level}:{','.join(map(str, self.coords))}"


def root(d: int) -> CellId:
    return CellId(0, (0,) * d)


def _check_cube(X, tol=1e-12):
    if (np.abs(X) > 0.5 + tol).any():
        raise ValueError("points must lie in the cube [-1/2, 1/2]^d")


def locate_many(X, level: int) -> np.ndarray:
    """Integer cell coordinates (shape ``(n, d)``) of every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    _check_cube(X)
    n_side = 1 << level
    Z = np.floor((X + 0.5) * n_side).astype(np.int64)
    return np.clip(Z, 0, n_side - 1)


def locate(x, level: int) -> CellId:
    """The level-``level`` cell containing ``x`` (upper boundary clamps inward)."""
    x = np.asarray(x, dtype=float).ravel()
    return CellId(level, tuple(locate_many(x[None, :], level)[0].tolist()))


def centers_of(Z, level: int) -> np.ndarray:
    """Centers of the cells with integer coordinates ``Z`` at ``level``."""
    return -0.5 + (np.asarray(Z, dtype=float) + 0.5) * 2.0 ** -level


def cell_center(cell: CellId) -> np.ndarray:
    return centers_of(np.asarray(cell.coords), cell.level)


def children(cell: CellId) -> list:
    """The ``2**d`` children in lexicographic order of their coordinates."""
    base = [2 * z for z in cell.coords]
    return [CellId(cell.level + 1, tuple(b + o for b, o in zip(base, offs)))
            for offs in itertools.product((0, 1), repeat=cell.d)]


def cell_bounds(cell: CellId):
    lo = -0.5 + np.asarray(cell.coords, dtype=float) * cell.side
    return lo, lo + cell.side


def row_lookup(keys, rows) -> np.ndarray:
    """Index of each row of ``rows`` within ``keys`` (lex-sorted, unique), or -1."""
    rows = np.atleast_2d(np.asarray(rows, dtype=np.int64))
    out = np.full(len(rows), -1, dtype=np.int64)
    keys = np.asarray(keys, dtype=np.int64)
    if len(keys) == 0 or len(rows) == 0:
        return out
    d = rows.shape[1]
    keys = keys.reshape(-1, d)
    top = max(int(keys.max()), int(rows.max()), 1)
    bits = top.bit_length()
    if bits * d <= 62 and keys.min() >= 0:
        # pack rows into integers; lex order equals numeric order
        kk, rr = np.zeros(len(keys), np.int64), np.zeros(len(rows), np.int64)
        for j in range(d):
            kk = (kk << bits) | keys[:, j]
            rr = (rr << bits) | np.maximum(rows[:, j], 0)
        pos = np.searchsorted(kk, rr)
        pos = np.minimum(pos, len(kk) - 1)
        hit = (kk[pos] == rr) & (rows >= 0).all(axis=1)
        out[hit] = pos[hit]
        return out
    both = np.concatenate([keys, rows])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.ravel()
    pos = np.full(inv.max() + 1, -1, dtype=np.int64)
    pos[inv[:len(keys)]] = np.arange(len(keys))
    return pos[inv[len(keys):]]


@dataclass(frozen=True)
class FixedGrid:
    """An axis-aligned grid of side ``side`` anchored at ``(-1/2, ..., -1/2)``."""

    side: float

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("grid side must be positive")

    @property
    def cells_per_axis(self) -> int:
        return max(1, math.ceil(1.0 / self.side - 1e-12))

    def coords_of(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        _check_cube(X, tol=1e-9)
        Z = np.floor((X + 0.5) / self.side).astype(np.int64)
        # keep the closed upper face inside the last cell
        return np.clip(Z, 0, self.cells_per_axis - 1)

    def centers_of(self, Z) -> np.ndarray:
        return -0.5 + np.asarray(Z, dtype=float) * self.side + self.side / 2

    def snap(self, X) -> np.ndarray:
        return self.centers_of(self.coords_of(X))


def locate_fixed(x, grid: FixedGrid):
    """``(coords, center)`` of the fixed-grid cell containing ``x``."""
    Z = grid.coords_of(np.asarray(x, dtype=float).ravel()[None, :])[0]
    return tuple(Z.tolist()), grid.centers_of(Z)


def snap_bound(side: float, spec: NormSpec) -> float:
    """Largest distance from a point to its fixed-grid cell center."""
    return side * delta(spec) / 2
