"""End-to-end replicable clustering pipelines.

A replicable run estimates OPT, builds a coreset at half the target
accuracy, estimates the coreset weights and hands the weighted coreset to
an oracle. Replicability and confidence budgets are split in three equal
parts across those stages.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .core import (Budget, Norm, NormSpec, SharedRandomness, as_randomness, canonical_json,
                   pairwise_distances)
from .coreset import CoresetParams, WeightedCoreset, build_coreset
from .optest import OptEstimate, estimate_opt_relative
from .oracle import OracleSpec, oracle_from_dict
from .primitives import r_sq, sq_size
from .sources import ArraySource, DistributionSource, Sampler

MODES = ("replicable", "vanilla")


@dataclass(frozen=True)
class PipelineConfig:
    """Algorithm parameters and the sample-budget knobs of a run.

    The defaults are the nominal sample sizes. Nominal coreset and
    mass-estimation budgets are far beyond desk scale; :meth:`desk`
    returns the calibrated setting used by the demos and tests.

    Parameters
    ----------
    k, p, eps, rho, delta : clustering size, cost exponent and targets.
    norm : metric family.
    beta : approximation ratio assumed for the oracle.
    oracle : OracleSpec, optional
        Defaults to weighted k-means++/Lloyd for p=2, k-medians for p=1.
    budget_scale, max_samples : scale and per-call clamp for coreset budgets.
    weight_budget_scale : scale of the weight-estimation budget (default ``budget_scale``).
    gamma, weight_eps : overrides of the heavy-hitter scale and weight accuracy.
    opt_budget_scale, opt_max_samples : per-trial sample size of OPT estimation.
    trials_scale, max_trials : number of OPT-estimation trials.
    opt_max_iter : halving steps before giving up on OPT.
    Lambda : skip OPT estimation and use this value.
    jl_constant : constant of the projection dimension.
    mode : ``replicable`` or ``vanilla`` (oracle on a raw sample).
    vanilla_samples : sample size of vanilla mode.
    n_eval : held-out sample size for the reported cost.
    """

    k: int = 3
    p: int = 2
    eps: float = 0.5
    rho: float = 0.2
    delta: float = 0.05
    norm: Norm = Norm.L2
    beta: float = 1.0
    oracle: OracleSpec = None
    budget_scale: float = 1.0
    max_samples: int = None
    weight_budget_scale: float = None
    gamma: float = None
    weight_eps: float = None
    opt_budget_scale: float = 1e-4
    opt_max_samples: int = None
    trials_scale: float = 1.0
    max_trials: int = None
    opt_max_iter: int = 40
    Lambda: float = None
    jl_constant: float = 1.0
    mode: str = "replicable"
    vanilla_samples: int = 20000
    n_eval: int = 20000

    def __post_init__(self):
        object.__setattr__(self, "norm", Norm.parse(self.norm))
        if isinstance(self.oracle, dict):
            object.__setattr__(self, "oracle", oracle_from_dict(self.oracle))
        if self.oracle is None:
            kind = "kmeanspp_lloyd" if self.p == 2 else "kmedianspp_lloyd"
            object.__setattr__(self, "oracle", OracleSpec(kind, beta=self.beta))
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.k < 1 or self.p not in (1, 2):
            raise ValueError("need k >= 1 and p in {1, 2}")
        if not (0 < self.eps and 0 < self.rho < 1 and 0 < self.delta < self.rho / 3):
            raise ValueError("need eps > 0, rho in (0, 1), delta in (0, rho/3)")

    @classmethod
    def desk(cls, **overrides) -> "PipelineConfig":
        """Calibrated budgets that finish a 2-D run in a few seconds."""
        base = dict(budget_scale=1e-3, max_samples=400_000, gamma=0.1, weight_eps=0.1,
                    weight_budget_scale=1e-2, opt_budget_scale=1.0, opt_max_samples=10_000,
                    trials_scale=1e-5, max_trials=16)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["oracle"] = self.oracle.to_dict()
        out["norm"] = self.norm.value
        return out

    @classmethod
    def from_dict(cls, obj) -> "PipelineConfig":
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown algorithm keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class PipelineResult:
    """Centers (and optionally a clustering function) plus how they were produced."""

    centers: np.ndarray
    Lambda: float
    coreset: WeightedCoreset
    config: PipelineConfig
    stages: dict = field(default_factory=dict)
    function: object = None
    opt: OptEstimate = None
    eval_cost: float = None
    eval_halfwidth: float = None
    seeds: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def artifact(self) -> dict:
        """The replicated output; evaluation numbers and data seeds are excluded."""
        out = {"centers": self.centers, "Lambda": self.Lambda,
               "coreset": self.coreset.artifact() if self.coreset is not None else None}
        if self.function is not None:
            out["function"] = self.function.to_dict()
        return out

    def artifact_json(self) -> str:
        return canonical_json(self.artifact())

    def to_dict(self) -> dict:
        out = self.artifact()
        out.update(config=self.config.to_dict(), seeds=self.seeds,
                   opt=self.opt.to_dict() if self.opt is not None else None,
                   coreset_provenance=self.coreset.provenance if self.coreset is not None else None,
                   eval_cost=self.eval_cost, eval_halfwidth=self.eval_halfwidth)
        return out

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def _as_sampler(source, data_rng=None):
    if hasattr(source, "draw"):
        return source
    if data_rng is None:
        data_rng = SharedRandomness(0).child("data")
    if isinstance(source, DistributionSource):
        return Sampler(source, data_rng)
    return Sampler(ArraySource(np.asarray(source, dtype=float)), data_rng)


def _budget(cfg: PipelineConfig) -> Budget:
    return Budget(cfg.budget_scale, cfg.max_samples)


def estimate_lambda(sampler, spec: NormSpec, cfg: PipelineConfig, rng) -> OptEstimate:
    """OPT estimate with a third of the replicability and confidence budgets."""
    return estimate_opt_relative(
        sampler, cfg.oracle, cfg.k, spec, cfg.eps, cfg.rho / 3, cfg.delta / 3, rng,
        Budget(cfg.opt_budget_scale, cfg.opt_max_samples),
        Budget(cfg.trials_scale, cfg.max_trials), max_iter=cfg.opt_max_iter)


def run_stages(sampler, spec: NormSpec, cfg: PipelineConfig, rng, Lambda=None) -> PipelineResult:
    """OPT estimate, coreset, weights and oracle on one sample stream."""
    rng = as_randomness(rng)
    timings = {}
    if cfg.mode == "vanilla":
        t0 = time.perf_counter()
        X = sampler.draw(cfg.vanilla_samples)
        centers = cfg.oracle.solve(X, None, cfg.k, spec, rng.child("oracle"))
        timings["oracle"] = time.perf_counter() - t0
        return PipelineResult(centers, None, None, cfg, {"oracle": centers.tolist()},
                              timings=timings)
    t0 = time.perf_counter()
    opt = None
    if Lambda is None and cfg.Lambda is None:
        opt = estimate_lambda(sampler, spec, cfg, rng.child("opt"))
        Lambda = opt.Lambda
    elif Lambda is None:
        Lambda = cfg.Lambda
    timings["Lambda"] = time.perf_counter() - t0
    params = CoresetParams(cfg.eps / 2, cfg.k, cfg.rho / 3, cfg.delta / 3, Lambda, spec,
                           beta=cfg.beta, gamma=cfg.gamma, weight_eps=cfg.weight_eps)
    t0 = time.perf_counter()
    wb = None if cfg.weight_budget_scale is None else Budget(cfg.weight_budget_scale, cfg.max_samples)
    cs = build_coreset(sampler, params, rng.child("coreset"), _budget(cfg), weight_budget=wb)
    timings["coreset"] = time.perf_counter() - t0
    t0 = time.perf_counter()
    centers = cfg.oracle.solve(cs.reps, cs.weights, cfg.k, spec, rng.child("oracle"))
    timings["oracle"] = time.perf_counter() - t0
    stages = {"Lambda": Lambda, "tree": [h.tolist() for h in cs.tree.heavy],
              "weights": cs.weights.tolist(), "oracle": centers.tolist()}
    return PipelineResult(centers, Lambda, cs, cfg, stages, opt=opt, timings=timings)


def _seeds(seed, data_seed):
    rng = SharedRandomness(seed).child("internal")
    data = SharedRandomness(seed).child("data", data_seed)
    return rng, data


def run_pipeline(source, cfg: PipelineConfig, seed: int = 0, data_seed: int = 0,
                 evaluate_cost: bool = True) -> PipelineResult:
    """Run the configured pipeline with internal stream ``seed``.

    Samples come from a data stream keyed by ``(seed, data_seed)``; paired
    executions share ``seed`` and differ in ``data_seed``. Euclidean inputs
    with ``d`` above the projection dimension go through the projection
    pipeline.
    """
    from .dimred import euclidean_pipeline, target_dim
    rng, data_rng = _seeds(seed, data_seed)
    sampler = _as_sampler(source, data_rng)
    d = sampler.d
    if (cfg.mode == "replicable" and cfg.norm is Norm.L2
            and target_dim(cfg.p, cfg.eps, cfg.k, cfg.delta, cfg.jl_constant) < d):
        res = euclidean_pipeline(sampler, cfg, rng)
    else:
        res = run_stages(sampler, NormSpec(cfg.norm, cfg.p, d), cfg, rng)
    res.seeds = {"seed": int(seed), "data_seed": int(data_seed)}
    if evaluate_cost and cfg.n_eval:
        res.eval_cost, res.eval_halfwidth = evaluate(res, sampler, cfg.n_eval)
    return res


def r_kmeans(source, cfg: PipelineConfig = None, seed: int = 0, data_seed: int = 0, **kw):
    """Replicable k-means: :func:`run_pipeline` with ``p = 2``."""
    cfg = replace(cfg or PipelineConfig.desk(), p=2, **kw)
    return run_pipeline(source, cfg, seed, data_seed)


def r_kmedians(source, cfg: PipelineConfig = None, seed: int = 0, data_seed: int = 0, **kw):
    """Replicable k-medians: :func:`run_pipeline` with ``p = 1``."""
    base = cfg or PipelineConfig.desk()
    oracle = base.oracle if base.p == 1 else OracleSpec("kmedianspp_lloyd", beta=base.beta)
    cfg = replace(base, p=1, oracle=oracle, **kw)
    return run_pipeline(source, cfg, seed, data_seed)


def evaluate(result: PipelineResult, source, n_eval: int, rng=None):
    """Held-out cost of a result and the 95% half-width of that estimate.

    Clustering functions are scored by the cost of the partition they
    induce, each part taking its best center on the evaluation sample.
    """
    if n_eval < 1:
        raise ValueError("n_eval must be >= 1")
    sampler = _as_sampler(source, rng)
    X = sampler.draw(n_eval)
    cfg = result.config
    fn = result.function
    if fn is not None and not fn.jl.identity:
        from .dimred import partition_cost
        from .oracle import _update
        lab = fn.classify(X)
        w = np.full(len(X), 1.0 / len(X))
        cen = _update(X, w, lab, np.zeros((fn.k, X.shape[1])), cfg.p)
        diff = X - cen[lab]
        per = np.sqrt((diff * diff).sum(axis=1)) ** cfg.p
        cost = partition_cost(X, lab, fn.k, cfg.p)
    else:
        spec = NormSpec(cfg.norm, cfg.p, X.shape[1])
        from .oracle import _assign_cost
        _, per = _assign_cost(X, np.asarray(result.centers, dtype=float), spec)
        cost = math.fsum(per.tolist()) / len(per)
    hw = 1.96 * float(np.std(per, ddof=1)) / math.sqrt(len(per)) if len(per) > 1 else math.inf
    return float(cost), hw


def ball_cover(eps: float, d: int, family=Norm.L2) -> np.ndarray:
    """Grid points within ``eps`` of every point of the unit-diameter ball.

    A cubic lattice of spacing ``2 eps / Delta`` covers the cube; lattice
    points outside the ball are moved to their nearest ball point, which
    keeps the cover property for ball points.
    """
    from .core import delta, norms
    spec = NormSpec(family, 1, d)
    side = 2.0 * eps / delta(spec)
    n = max(1, math.ceil(1.0 / side))
    axis = -0.5 + (np.arange(n) + 0.5) / n
    G = np.array(list(itertools.product(axis, repeat=d)), dtype=float)
    r = norms(G, family)
    out = r > 0.5
    G[out] *= (0.5 / r[out])[:, None]
    return np.unique(G, axis=0)


def r_kmeans_cover(source, k: int, eps: float, rho: float, delta: float, rng,
                   data_rng=None, budget=None, max_subsets: int = 20_000, family=Norm.L2):
    """Replicable k-means by scoring every k-subset of an ``eps/3``-cover.

    Each subset's cost is a replicable statistical query at accuracy
    ``eps/3`` with replicability ``rho/|F|`` and confidence ``delta/|F|``.
    All queries share one sample batch.

    Returns
    -------
    centers : ndarray of shape (k, d)
    info : dict
    """
    rng = as_randomness(rng)
    sampler = _as_sampler(source, data_rng)
    d = sampler.d
    spec = NormSpec(family, 2, d)
    cover = ball_cover(eps / 3.0, d, family)
    n_sub = math.comb(len(cover), k)
    if n_sub > max_subsets:
        raise ValueError(f"{n_sub} candidate subsets exceed the cap {max_subsets}")
    budget = Budget() if budget is None else budget
    rho_q, delta_q = rho / n_sub, delta / n_sub
    n = budget.size("cover.sq", sq_size(eps / 3.0, rho_q, delta_q))
    X = sampler.draw(n)
    D = pairwise_distances(X, cover, family) ** 2
    # every query reads the same batch, so each is sized to exactly n samples
    same_batch = Budget(n / sq_size(eps / 3.0, rho_q, delta_q), hard_cap=None)
    best, best_val = None, math.inf
    for j, sub in enumerate(itertools.combinations(range(len(cover)), k)):
        vals = np.clip(D[:, list(sub)].min(axis=1), 0.0, 1.0)
        est = r_sq(lambda _X, _v=vals: _v, lambda _n: X, eps / 3.0, rho_q, delta_q,
                   rng.child("sq", j), same_batch)
        if est < best_val:
            best, best_val = sub, est
    return cover[list(best)].copy(), {"cover_size": len(cover), "subsets": n_sub,
                                      "samples": n, "estimate": best_val}


@dataclass
class PairedOutcome:
    match: bool
    divergence: str
    first: PipelineResult
    second: PipelineResult
    seconds: float


STAGE_ORDER = ("Lambda", "tree", "weights", "oracle")


def first_divergence(a: PipelineResult, b: PipelineResult) -> str:
    """Name of the earliest stage whose output differs, or ``""``."""
    for name in STAGE_ORDER:
        if canonical_json(a.stages.get(name)) != canonical_json(b.stages.get(name)):
            return name
    if a.artifact_json() != b.artifact_json():
        return "function"
    return ""


def paired_trial(source, cfg: PipelineConfig, seed: int, data_seeds=(0, 1),
                 evaluate_cost: bool = False) -> PairedOutcome:
    """Two executions sharing internal randomness, each with its own data stream."""
    t0 = time.perf_counter()
    a = run_pipeline(source, cfg, seed, data_seeds[0], evaluate_cost)
    b = run_pipeline(source, cfg, seed, data_seeds[1], evaluate_cost)
    div = first_divergence(a, b)
    return PairedOutcome(div == "", div, a, b, time.perf_counter() - t0)


def binomial_halfwidth(rate: float, n: int, z: float = 1.96) -> float:
    """Normal-approximation 95% half-width of a binomial proportion."""
    return z * math.sqrt(max(rate * (1 - rate), 0.0) / n) if n else math.inf


def wilson_interval(successes: int, n: int, z: float = 1.96):
    if n == 0:
        return 0.0, 1.0
    ph = successes / n
    den = 1 + z * z / n
    mid = (ph + z * z / (2 * n)) / den
    hw = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    return max(0.0, mid - hw), min(1.0, mid + hw)
