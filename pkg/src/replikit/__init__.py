"""Replicable statistical clustering.

Two runs that share internal randomness but see independent samples from
the same distribution return identical centers with probability at least
``1 - rho``.
"""

from .core import (Budget, BudgetExceededError, Norm, NormSpec, OptIndistinguishableError,
                   ReplikitError, SharedRandomness)
from .coreset import CoresetParams, WeightedCoreset, build_coreset
from .dimred import ClusteringFunction, make_jl, target_dim
from .estimators import ReplicableKCenters, ReplicableKMeans, ReplicableKMedians
from .kcenters import KCentersParams, r_active_cells, r_kcenters
from .optest import estimate_opt_additive, estimate_opt_relative
from .oracle import OracleSpec, clustering_cost
from .pipelines import (PipelineConfig, PipelineResult, paired_trial, r_kmeans, r_kmeans_cover,
                        r_kmedians, run_pipeline)
from .primitives import r_heavy_hitters, r_mass_estimate, r_round, r_sq
from .sources import ArraySource, CSVSource, FiniteWeighted, TruncGaussMixture, TwoMoons

__version__ = "0.1.0"

__all__ = [
    "ArraySource", "Budget", "BudgetExceededError", "CSVSource", "ClusteringFunction",
    "CoresetParams", "FiniteWeighted", "KCentersParams", "Norm", "NormSpec",
    "OptIndistinguishableError", "OracleSpec", "PipelineConfig", "PipelineResult",
    "ReplicableKCenters", "ReplicableKMeans", "ReplicableKMedians", "ReplikitError",
    "SharedRandomness", "TruncGaussMixture", "TwoMoons", "WeightedCoreset", "build_coreset",
    "clustering_cost", "estimate_opt_additive", "estimate_opt_relative", "make_jl",
    "paired_trial", "r_active_cells", "r_heavy_hitters", "r_kcenters", "r_kmeans",
    "r_kmeans_cover", "r_kmedians", "r_mass_estimate", "r_round", "r_sq", "run_pipeline",
    "target_dim",
]
