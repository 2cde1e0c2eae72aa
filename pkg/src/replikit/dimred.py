"""Random projections and the clustering-function output for Euclidean data.

Points are scaled by ``1/sqrt(d)``, snapped to a fine grid, projected to
``m`` dimensions, clustered there, and the result is returned as a function
that labels any point of the original space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import Norm, NormSpec, as_generator, as_randomness, canonical_json
from .grid import FixedGrid

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def target_dim(p, eps, k, delta, C=1.0) -> int:
    """Projection dimension ``ceil(C * p**4 / eps**2 * ln(k / (eps * delta)))``."""
    if min(p, eps, k, delta, C) <= 0:
        raise ValueError("all arguments must be positive")
    return max(1, math.ceil(C * p ** 4 / eps ** 2 * math.log(k / (eps * delta))))


def _orthonormal_rows(G):
    """Modified Gram-Schmidt on the rows of ``G`` using elementwise sums only.

    Avoids BLAS so the frame is bit-identical wherever numpy runs.
    """
    Q = np.array(G, dtype=float)
    for i in range(len(Q)):
        for j in range(i):
            Q[i] -= math.fsum((Q[i] * Q[j]).tolist()) * Q[j]
        Q[i] /= math.sqrt(math.fsum((Q[i] * Q[i]).tolist()))
    return Q


@dataclass(frozen=True)
class JLMap:
    """``x -> sqrt(d/m) * P x`` for a random orthonormal ``m``-frame ``P``."""

    d: int
    m: int
    matrix: np.ndarray
    identity: bool = False

    @property
    def frame(self) -> np.ndarray:
        """The orthonormal rows before scaling."""
        return self.matrix / math.sqrt(self.d / self.m)

    def apply(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise ValueError(f"expected dimension {self.d}, got {X.shape[1]}")
        if self.identity:
            return X.copy()
        out = np.zeros((len(X), self.m))
        for j in range(self.d):
            out += X[:, j, None] * self.matrix[None, :, j]
        return out

    def to_dict(self):
        return {"d": self.d, "m": self.m, "identity": self.identity,
                "matrix": None if self.identity else self.matrix.tolist()}


def make_jl(d: int, m: int, rng) -> JLMap:
    """Orthonormalized Gaussian frame scaled by ``sqrt(d/m)``; identity when ``m >= d``."""
    if m >= d:
        if m > d:
            logger.info("target dimension %d >= source dimension %d; using the identity", m, d)
        return JLMap(d, d, np.eye(d), identity=True)
    gen = as_generator(rng)
    P = _orthonormal_rows(gen.standard_normal((m, d)))
    return JLMap(d, m, math.sqrt(d / m) * P)


@dataclass(frozen=True)
class ClusteringFunction:
    """Label map ``x -> argmin_j |pi(snap(x * scale)) - g_j|``.

    ``grid_side`` is ``None`` when no snapping is applied (identity case).
    """

    scale: float
    grid_side: float
    jl: JLMap
    centers: np.ndarray
    p: int = 2

    @property
    def k(self):
        return len(self.centers)

    def embed(self, X) -> np.ndarray:
        Y = np.atleast_2d(np.asarray(X, dtype=float)) * self.scale
        if self.grid_side is not None:
            Y = FixedGrid(self.grid_side).snap(Y)
        Z = self.jl.apply(Y)
        return np.clip(Z, -0.5, 0.5) if not self.jl.identity else Z

    def classify(self, X) -> np.ndarray:
        from .oracle import assign
        lab, _ = assign(self.embed(X), self.centers, NormSpec(Norm.L2, self.p, self.centers.shape[1]))
        return lab

    def to_dict(self):
        return {"version": SCHEMA_VERSION, "scale": self.scale, "grid_side": self.grid_side,
                "jl": self.jl.to_dict(), "centers": self.centers.tolist(), "p": self.p}

    def to_json(self) -> str:
        return canonical_json(self.to_dict())

    @classmethod
    def from_dict(cls, obj):
        jl = obj["jl"]
        d = jl["d"]
        mat = np.eye(d) if jl["identity"] else np.asarray(jl["matrix"], dtype=float)
        return cls(obj["scale"], obj["grid_side"], JLMap(d, jl["m"], mat, jl["identity"]),
                   np.asarray(obj["centers"], dtype=float), obj.get("p", 2))


def classify(f: ClusteringFunction, x):
    """Label of a single point, or labels of the rows of a 2-D array."""
    x = np.asarray(x, dtype=float)
    lab = f.classify(x)
    return int(lab[0]) if x.ndim == 1 else lab


def partition_cost(X, labels, k, p, weights=None) -> float:
    """Cost of a partition with the best center of each part (centroid or coordinate median)."""
    from .oracle import _update
    X = np.atleast_2d(np.asarray(X, dtype=float))
    w = np.full(len(X), 1.0 / len(X)) if weights is None else np.asarray(weights, dtype=float)
    centers = np.zeros((k, X.shape[1]))
    centers = _update(X, w, labels, centers, p)
    diff = X - centers[labels]
    dist = np.sqrt((diff * diff).sum(axis=1))
    return math.fsum((w * dist ** p).tolist())


def euclidean_pipeline(source, cfg, rng, data_rng=None):
    """Replicable clustering of Euclidean data through a random projection.

    Returns a :class:`~replikit.pipelines.PipelineResult` whose ``function``
    is the :class:`ClusteringFunction`. When the target dimension is not
    below ``d`` the plain coreset pipeline runs unchanged and the function
    is its centers under the identity map.
    """
    from .pipelines import run_stages, _as_sampler, PipelineResult

    rng = as_randomness(rng)
    sampler = _as_sampler(source, data_rng)
    d = sampler.d
    p = cfg.p
    m = target_dim(p, cfg.eps, cfg.k, cfg.delta, cfg.jl_constant)
    if m >= d:
        res = run_stages(sampler, NormSpec(Norm.L2, p, d), cfg, rng)
        fn = ClusteringFunction(1.0, None, make_jl(d, d, None), res.centers, p)
        return PipelineResult(res.centers, res.Lambda, res.coreset, cfg, res.stages,
                              function=fn, opt=res.opt)
    scale = 1.0 / math.sqrt(d)
    from .sources import TransformedSampler
    scaled = TransformedSampler(sampler, lambda X: X * scale, d)
    spec_d = NormSpec(Norm.L2, p, d)
    opt = None
    if cfg.Lambda is not None:
        lam = cfg.Lambda
    else:
        from .pipelines import estimate_lambda
        opt = estimate_lambda(scaled, spec_d, cfg, rng.child("opt"))
        lam = opt.Lambda
    side = cfg.eps * lam / (4.0 * p * spec_d.delta)
    jl = make_jl(d, m, rng.child("jl"))
    grid = FixedGrid(side)
    projected = TransformedSampler(sampler, lambda X: np.clip(jl.apply(grid.snap(X * scale)), -0.5, 0.5), m)
    res = run_stages(projected, NormSpec(Norm.L2, p, m), cfg, rng, Lambda=lam)
    fn = ClusteringFunction(scale, side, jl, res.centers, p)
    stages = dict(res.stages)
    stages["jl"] = jl.to_dict()
    return PipelineResult(res.centers, lam, res.coreset, cfg, stages, function=fn,
                          opt=opt or res.opt)
