"""Geometry of the unit-diameter ball and the shared-randomness discipline."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class ReplikitError(Exception):
    """Base class for library errors."""


class BudgetExceededError(ReplikitError):
    """A sample budget exceeded its configured hard cap."""

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class OptIndistinguishableError(ReplikitError):
    """OPT could not be separated from zero at the available budget."""


class Norm(str, Enum):
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"

    @classmethod
    def parse(cls, value):
        if isinstance(value, Norm):
            return value
        key = str(value).lower().replace("-", "").replace("_", "")
        aliases = {"l1": cls.L1, "manhattan": cls.L1, "l2": cls.L2,
                   "euclidean": cls.L2, "linf": cls.LINF, "inf": cls.LINF,
                   "chebyshev": cls.LINF}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unsupported norm {value!r}; expected l1, l2 or linf") from None


@dataclass(frozen=True)
class NormSpec:
    """The metric family, the cost exponent and the ambient dimension.

    ``p = math.inf`` selects the k-centers (max) objective.
    """

    family: Norm = Norm.L2
    p: float = 2
    d: int = 2

    def __post_init__(self):
        object.__setattr__(self, "family", Norm.parse(self.family))
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if not (self.p == math.inf or (float(self.p).is_integer() and self.p >= 1)):
            raise ValueError("p must be a positive integer or math.inf")

    @property
    def delta(self) -> float:
        return delta(self)

    def with_dim(self, d: int) -> "NormSpec":
        return NormSpec(self.family, self.p, d)


def delta(spec: NormSpec) -> float:
    """Diameter of the unit hypercube under the norm of ``spec``."""
    if spec.family is Norm.L1:
        return float(spec.d)
    if spec.family is Norm.L2:
        return math.sqrt(spec.d)
    return 1.0


def norms(X, family) -> np.ndarray:
    """Row-wise norms of ``X`` (shape ``(n, d)``)."""
    family = Norm.parse(family)
    X = np.asarray(X, dtype=float)
    if family is Norm.L1:
        return np.abs(X).sum(axis=-1)
    if family is Norm.L2:
        return np.sqrt((X * X).sum(axis=-1))
    return np.abs(X).max(axis=-1)


def pairwise_distances(X, Y, family) -> np.ndarray:
    """Distance matrix of shape ``(len(X), len(Y))``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    family = Norm.parse(family)
    out = np.zeros((len(X), len(Y)))
    # column loop keeps reductions contiguous and in a fixed order
    for c in range(X.shape[1]):
        diff = np.abs(X[:, c, None] - Y[None, :, c])
        if family is Norm.L1:
            out += diff
        elif family is Norm.L2:
            out += diff * diff
        else:
            np.maximum(out, diff, out=out)
    return np.sqrt(out) if family is Norm.L2 else out


def norm_distance(x, y, spec: NormSpec) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != (spec.d,) or y.shape != (spec.d,):
        raise ValueError(f"expected points of dimension {spec.d}, got {x.shape} and {y.shape}")
    return float(norms(x - y, spec.family))


def in_ball(X, family, tol=1e-12) -> np.ndarray:
    """Mask of rows lying in the closed ball of diameter 1 about the origin."""
    return norms(np.atleast_2d(X), family) <= 0.5 + tol


_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SharedRandomness:
    """A labelled, hierarchically split random stream.

    Two executions holding the same ``(master_seed, path)`` draw identical
    numbers; distinct paths give independent streams.
    """

    master_seed: int = 0
    path: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "path", tuple(str(p) for p in self.path))

    def child(self, *labels) -> "SharedRandomness":
        if not labels:
            raise ValueError("at least one label is required")
        for label in labels:
            if str(label) == "":
                raise ValueError("labels must be nonempty")
        return SharedRandomness(self.master_seed, self.path + tuple(str(x) for x in labels))

    @property
    def seed(self) -> int:
        """Keyed 64-bit hash of the path."""
        key = self.master_seed.to_bytes(8, "little")
        msg = "\x1f".join(self.path).encode("utf-8")
        digest = hashlib.blake2b(msg, digest_size=8, key=key, person=b"replikit").digest()
        return int.from_bytes(digest, "little")

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        return np.random.Generator(np.random.PCG64(self.seed))

    def __str__(self):
        return f"{self.master_seed}:{'/'.join(self.path)}"


def split_randomness(parent: SharedRandomness, label: str) -> SharedRandomness:
    return parent.child(label)


def as_randomness(seed) -> SharedRandomness:
    if isinstance(seed, SharedRandomness):
        return seed
    if seed is None:
        return SharedRandomness(0)
    if isinstance(seed, (int, np.integer)):
        return SharedRandomness(int(seed))
    raise TypeError(f"cannot build shared randomness from {type(seed).__name__}")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def canonical_json(obj) -> str:
    """Sorted-key JSON with shortest round-trip float formatting."""
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class Budget:
    """Sample-size policy applied to every theoretical sample count.

    The count used is ``ceil(scale * n_theory)``, clamped to ``max_samples``
    when set. Requests above ``hard_cap`` raise instead of clamping. Every
    request is appended to ``log`` as ``(label, n_theory, n_used)``.
    """

    scale: float = 1.0
    max_samples: int = None
    hard_cap: int = 10 ** 8
    log: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("budget scale must be positive")

    def size(self, label: str, n_theory: float) -> int:
        n = max(1, math.ceil(self.scale * n_theory))
        if self.max_samples is not None:
            n = min(n, int(self.max_samples))
        if self.hard_cap is not None and n > self.hard_cap:
            raise BudgetExceededError(
                f"{label}: {n} samples required, above the hard cap {self.hard_cap}; "
                "lower budget_scale, set max_samples or coarsen the parameters", required=n)
        self.log.append((label, float(n_theory), n))
        return n

    def total(self) -> int:
        return sum(n for _, _, n in self.log)

    def spawn(self) -> "Budget":
        """Same policy, empty log."""
        return Budget(self.scale, self.max_samples, self.hard_cap)


def as_budget(budget) -> Budget:
    if budget is None:
        return Budget()
    if isinstance(budget, Budget):
        return budget
    return Budget(scale=float(budget))


def as_generator(rng) -> np.random.Generator:
    """Accept a :class:`SharedRandomness`, a seed, or a ready generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return as_randomness(rng).generator()
