"""Replicable estimates of the optimal clustering cost.

The additive estimator averages normalized oracle costs over independent
sample batches and rounds the mean replicably. The relative estimator calls
it with halving accuracy until the accuracy is small next to the estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Budget, NormSpec, OptIndistinguishableError, as_budget, as_randomness
from .oracle import OracleSpec, clustering_cost
from .primitives import RoundingParams, r_round


@dataclass
class OptEstimate:
    """Estimate ``Lambda`` of the optimal cost and how it was reached."""

    Lambda: float
    eps: float
    beta: float
    iterations: int
    trace: list = field(default_factory=list)

    def to_dict(self):
        return {"Lambda": self.Lambda, "eps": self.eps, "beta": self.beta,
                "iterations": self.iterations, "trace": self.trace}


def trial_sample_size(k: int, d: int, eps: float, delta: float, p) -> float:
    """Uniform-convergence sample size ``k^2 d^2 / eps^4 * log(p / delta)`` before scaling."""
    p_eff = 1.0 if p == math.inf else float(p)
    return k * k * d * d / eps ** 4 * max(math.log(p_eff / delta), 1.0)


def n_trials(eps: float, delta: float) -> float:
    return math.log(2.0 / delta) / (2.0 * eps ** 2)


def estimate_opt_additive(sampler, oracle: OracleSpec, k: int, spec: NormSpec, eps: float,
                          rho: float, delta: float, rng, budget=None, trials_budget=None,
                          info=None) -> float:
    """Replicable estimate of OPT within ``[OPT/beta - eps, OPT + eps]``.

    Parameters
    ----------
    sampler : object with ``draw(n)``
    oracle : OracleSpec
        Its reported cost is divided by ``oracle.beta``.
    budget : Budget, optional
        Scales the per-trial sample size (default scale ``1e-4``).
    trials_budget : Budget, optional
        Scales the number of trials (default: the nominal count).
    """
    if not 0 < delta < rho / 3:
        raise ValueError("delta must lie in (0, rho/3)")
    rng = as_randomness(rng)
    budget = Budget(1e-4) if budget is None else as_budget(budget)
    trials_budget = as_budget(trials_budget)
    n_tr = trials_budget.size("opt.trials", n_trials(eps, delta))
    N = budget.size("opt.trial_samples", trial_sample_size(k, spec.d, eps, delta, spec.p))
    xi = np.empty(n_tr)
    for j in range(n_tr):
        X = sampler.draw(N)
        centers = oracle.solve(X, None, k, spec, rng.child("trial", j))
        xi[j] = clustering_cost(X, centers, spec) / oracle.beta
    mean = max(float(xi.mean()), 0.0)
    lam = float(r_round([mean], RoundingParams(eps, rho, delta), rng.child("round"))[0])
    if info is not None:
        info.update(trials=n_tr, trial_samples=N, mean=mean, rounded=lam)
    return max(lam, 0.0)


def estimate_opt_relative(sampler, oracle: OracleSpec, k: int, spec: NormSpec, eps: float,
                          rho: float, delta: float, rng, budget=None, trials_budget=None,
                          max_iter: int = 40) -> OptEstimate:
    """Halve ``(eps_i, rho_i, delta_i)`` until ``eps_i <= eps * Lambda_i / 2``.

    Raises
    ------
    OptIndistinguishableError
        When ``max_iter`` rounds pass without meeting the stop rule, which
        is what happens when OPT is zero or below the reachable resolution.
    """
    rng = as_randomness(rng)
    budget = Budget(1e-4) if budget is None else as_budget(budget)
    trials_budget = as_budget(trials_budget)
    trace = []
    for i in range(1, max_iter + 1):
        h = 2.0 ** -i
        step = {}
        lam = estimate_opt_additive(sampler, oracle, k, spec, h, h * rho, h * delta,
                                    rng.child("iter", i), budget, trials_budget, info=step)
        trace.append({"i": i, "eps_i": h, "rho_i": h * rho, "delta_i": h * delta,
                      "Lambda_i": lam, "trials": step["trials"],
                      "trial_samples": step["trial_samples"]})
        if lam > 0 and h <= eps * lam / 2.0:
            return OptEstimate(lam, eps, oracle.beta, i, trace)
    raise OptIndistinguishableError(
        f"OPT indistinguishable from 0 at this budget after {max_iter} halving steps")
