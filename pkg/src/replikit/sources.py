"""Distributions over the unit-diameter ball and sample streams drawn from them.

Every source is immutable; ``source.sample(n, gen)`` is a pure function of
the generator state. :class:`Sampler` couples a source with one data stream
and is the only stateful piece.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import BudgetExceededError, Norm, SharedRandomness, in_ball, norms


@dataclass(frozen=True)
class Normalization:
    """Affine map ``x -> (x - center) * scale`` into the unit-diameter ball."""

    center: tuple
    scale: float

    def apply(self, X):
        return (np.asarray(X, dtype=float) - np.asarray(self.center)) * self.scale

    def invert(self, Y):
        return np.asarray(Y, dtype=float) / self.scale + np.asarray(self.center)

    def to_dict(self):
        return {"center": list(self.center), "scale": self.scale}

    @classmethod
    def identity(cls, d):
        return cls(tuple([0.0] * d), 1.0)

    @classmethod
    def bounding_box(cls, X, family=Norm.L2):
        """Translate to the box center and shrink the box's diameter to 1."""
        X = np.asarray(X, dtype=float)
        lo, hi = X.min(axis=0), X.max(axis=0)
        diam = float(norms(hi - lo, family))
        scale = 1.0 / diam if diam > 0 else 1.0
        return cls(tuple(float(c) for c in (lo + hi) / 2), scale)


class DistributionSource:
    """Base class. Subclasses implement ``_draw(n, gen)``."""

    kind = "abstract"
    d: int
    norm: Norm = Norm.L2

    def sample(self, n: int, gen: np.random.Generator) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be >= 1")
        X = self._draw(int(n), gen)
        if not in_ball(X, self.norm).all():
            raise ValueError(f"{self.kind} source emitted points outside the unit-diameter ball")
        return X

    def _draw(self, n, gen):
        raise NotImplementedError

    def support(self):
        """``(points, weights)`` for finitely supported sources, else ``None``."""
        return None

    def to_dict(self):
        raise NotImplementedError


def _rejection(draw_batch, n, gen, family):
    out, have = [], 0
    while have < n:
        batch = draw_batch(max(2 * (n - have), 64), gen)
        batch = batch[in_ball(batch, family, tol=0.0)]
        out.append(batch)
        have += len(batch)
    return np.concatenate(out)[:n]


@dataclass(frozen=True)
class TwoMoons(DistributionSource):
    """Two interleaving half circles with Gaussian noise, fitted in the ball.

    The noiseless moons are scaled so their farthest point sits at radius
    ``radius``; ``noise`` is the standard deviation after that scaling.
    Noisy draws falling outside the ball are rejected.
    """

    noise: float = 0.06
    radius: float = 0.4
    d: int = 2
    norm: Norm = Norm.L2
    kind = "two_moons"

    # the noiseless moons live in [-1, 2] x [-0.5, 1]
    _CENTER = (0.5, 0.25)
    _EXTENT = math.hypot(1.5, 0.25)

    def _batch(self, n, gen):
        t = gen.uniform(0.0, math.pi, size=n)
        upper = gen.random(n) < 0.5
        x = np.where(upper, np.cos(t), 1.0 - np.cos(t))
        y = np.where(upper, np.sin(t), 0.5 - np.sin(t))
        X = np.column_stack([x - self._CENTER[0], y - self._CENTER[1]])
        X *= self.radius / self._EXTENT
        return X + gen.normal(0.0, self.noise, size=X.shape)

    def _draw(self, n, gen):
        return _rejection(self._batch, n, gen, self.norm)

    def to_dict(self):
        return {"kind": self.kind, "noise": self.noise, "radius": self.radius}


_DEFAULT_MEANS = ((-0.2, -0.12), (0.2, -0.12), (0.0, 0.2))


@dataclass(frozen=True)
class TruncGaussMixture(DistributionSource):
    """Isotropic Gaussian mixture truncated to the ball by rejection."""

    means: tuple = _DEFAULT_MEANS
    std: float = 0.06
    weights: tuple = None
    norm: Norm = Norm.L2
    kind = "trunc_gauss_mixture"

    def __post_init__(self):
        means = tuple(tuple(float(v) for v in m) for m in self.means)
        object.__setattr__(self, "means", means)
        if self.weights is None:
            object.__setattr__(self, "weights", tuple([1.0 / len(means)] * len(means)))
        if len({len(m) for m in means}) != 1:
            raise ValueError("all component means must share a dimension")
        if not math.isclose(sum(self.weights), 1.0, abs_tol=1e-9):
            raise ValueError("mixture weights must sum to 1")

    @property
    def d(self):
        return len(self.means[0])

    def _batch(self, n, gen):
        comp = gen.choice(len(self.means), size=n, p=np.asarray(self.weights))
        mu = np.asarray(self.means)[comp]
        return mu + gen.normal(0.0, self.std, size=mu.shape)

    def _draw(self, n, gen):
        return _rejection(self._batch, n, gen, self.norm)

    def to_dict(self):
        return {"kind": self.kind, "means": [list(m) for m in self.means],
                "std": self.std, "weights": list(self.weights)}


class FiniteWeighted(DistributionSource):
    """A finitely supported distribution given by atoms and probabilities."""

    kind = "finite_weighted"

    def __init__(self, points, weights=None, norm=Norm.L2):
        P = np.atleast_2d(np.asarray(points, dtype=float))
        if P.ndim != 2 or len(P) == 0:
            raise ValueError("points must be a nonempty 2-D array")
        w = np.full(len(P), 1.0 / len(P)) if weights is None else np.asarray(weights, dtype=float)
        if w.shape != (len(P),):
            raise ValueError("weights must match the number of points")
        if (w < 0).any() or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        self.norm = Norm.parse(norm)
        if not in_ball(P, self.norm).all():
            raise ValueError("points lie outside the unit-diameter ball")
        self.points = P
        self.weights = w
        self.d = P.shape[1]
        self._cdf = np.cumsum(w)
        self._cdf[-1] = 1.0

    def _draw(self, n, gen):
        idx = np.searchsorted(self._cdf, gen.random(n), side="right")
        return self.points[np.minimum(idx, len(self.points) - 1)]

    def support(self):
        return self.points, self.weights

    def to_dict(self):
        return {"kind": self.kind, "points": self.points.tolist(), "weights": self.weights.tolist()}


class ArraySource(FiniteWeighted):
    """The empirical distribution of a data matrix.

    With ``replace=False`` the rows are consumed in order as a finite i.i.d.
    stream (see :class:`Sampler`) and running out is an error.
    """

    kind = "array"

    def __init__(self, X, weights=None, replace=True, norm=Norm.L2):
        super().__init__(X, weights, norm=norm)
        self.replace = replace

    def to_dict(self):
        out = super().to_dict()
        out["replace"] = self.replace
        return out


@dataclass(frozen=True)
class CSVSource(DistributionSource):
    """Points read from a CSV file, normalized into the ball.

    The header is ``x0,...,x{d-1}`` with an optional trailing ``w`` column.
    Unless ``normalization`` is given, rows are translated to the bounding
    box center and scaled by the box's diameter under ``norm``.
    """

    path: str = ""
    norm: Norm = Norm.L2
    normalization: Normalization = None
    replace: bool = True
    kind = "csv"
    _data: tuple = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm.parse(self.norm))
        raw, w = read_points_csv(self.path)
        norm_rec = self.normalization or Normalization.bounding_box(raw, self.norm)
        object.__setattr__(self, "normalization", norm_rec)
        X = norm_rec.apply(raw)
        if not in_ball(X, self.norm, tol=1e-9).all():
            raise ValueError(f"{self.path}: rows fall outside the ball after normalization")
        if w is None:
            w = np.full(len(X), 1.0 / len(X))
        else:
            w = w / w.sum()
        object.__setattr__(self, "_data", ArraySource(X, w, replace=self.replace, norm=self.norm))

    @property
    def d(self):
        return self._data.d

    @property
    def array(self):
        return self._data

    def _draw(self, n, gen):
        return self._data._draw(n, gen)

    def support(self):
        return self._data.support()

    def to_dict(self):
        return {"kind": self.kind, "path": str(self.path),
                "normalization": self.normalization.to_dict(), "replace": self.replace}


def read_points_csv(path):
    """Read ``x0..x{d-1}[,w]`` rows; lines starting with ``#`` are comments."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OSError(f"cannot read point file {path}: {exc}") from exc
    rows = [line for line in text.splitlines() if line.strip() and not line.startswith("#")]
    if not rows:
        raise ValueError(f"{path}: no rows")
    reader = csv.reader(rows)
    header = [h.strip() for h in next(reader)]
    coords = [i for i, h in enumerate(header) if h.startswith("x")]
    if coords != list(range(len(coords))) or not coords:
        raise ValueError(f"{path}: header must start with x0..x(d-1), got {header}")
    has_w = len(header) == len(coords) + 1 and header[-1] == "w"
    if len(header) != len(coords) + int(has_w):
        raise ValueError(f"{path}: unexpected columns in header {header}")
    data = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            data.append([float(v) for v in row])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric field in {row}") from None
    A = np.asarray(data, dtype=float)
    if not np.isfinite(A).all():
        raise ValueError(f"{path}: non-finite values")
    if has_w:
        w = A[:, -1]
        if (w < 0).any() or w.sum() <= 0:
            raise ValueError(f"{path}: weights must be nonnegative with positive sum")
        return A[:, :-1], w
    return A, None


def write_points_csv(path, X, weights=None, comment=None):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    header = [f"x{j}" for j in range(X.shape[1])] + (["w"] if weights is not None else [])
    lines = []
    if comment:
        lines.append(f"#{comment}")
    lines.append(",".join(header))
    for i, row in enumerate(X):
        vals = [repr(float(v)) for v in row]
        if weights is not None:
            vals.append(repr(float(weights[i])))
        lines.append(",".join(vals))
    Path(path).write_text("\n".join(lines) + "\n")


def source_from_dict(cfg) -> DistributionSource:
    cfg = dict(cfg)
    kind = cfg.pop("kind")
    norm = cfg.pop("norm", "l2")
    if kind == "two_moons":
        return TwoMoons(norm=Norm.parse(norm), **cfg)
    if kind == "trunc_gauss_mixture":
        if "means" in cfg:
            cfg["means"] = tuple(tuple(m) for m in cfg["means"])
        if cfg.get("weights") is not None:
            cfg["weights"] = tuple(cfg["weights"])
        return TruncGaussMixture(norm=Norm.parse(norm), **cfg)
    if kind == "finite_weighted":
        return FiniteWeighted(cfg["points"], cfg.get("weights"), norm=norm)
    if kind == "csv":
        nrec = cfg.get("normalization")
        if nrec is not None:
            nrec = Normalization(tuple(nrec["center"]), float(nrec["scale"]))
        return CSVSource(path=cfg["path"], norm=norm, normalization=nrec,
                         replace=cfg.get("replace", True))
    raise ValueError(f"unknown source kind {kind!r}")


class Sampler:
    """One data stream over a source: successive ``draw`` calls continue it."""

    def __init__(self, source: DistributionSource, stream):
        self.source = source
        if isinstance(stream, SharedRandomness):
            stream = stream.generator()
        self._gen = stream
        self._cursor = 0
        self.drawn = 0

    @property
    def d(self):
        return self.source.d

    def draw(self, n: int) -> np.ndarray:
        n = int(n)
        src = self.source.array if isinstance(self.source, CSVSource) else self.source
        if isinstance(src, ArraySource) and not src.replace:
            end = self._cursor + n
            if end > len(src.points):
                raise BudgetExceededError(
                    f"data stream exhausted: need {end} rows, source has {len(src.points)}",
                    required=end)
            X = src.points[self._cursor:end]
            self._cursor = end
        else:
            X = self.source.sample(n, self._gen)
        self.drawn += n
        return X


class TransformedSampler:
    """A sampler whose draws pass through ``fn`` (scaling, snapping, projection)."""

    def __init__(self, base, fn, d):
        self.base = base
        self.fn = fn
        self.d = d

    @property
    def drawn(self):
        return self.base.drawn

    def draw(self, n):
        return self.fn(self.base.draw(n))
