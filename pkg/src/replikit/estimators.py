"""scikit-learn style wrappers around the replicable pipelines.

``fit(X)`` treats the rows of ``X`` as the distribution to cluster and
samples from it with replacement. Two fits that share ``random_state`` but
see different data from the same distribution return the same centers with
high probability.

Data are mapped into the unit-diameter ball by a fixed affine map
``(x - data_center) * data_scale``. The map is a parameter and is never
fitted: a data-dependent map would differ between two datasets and break
replicability.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .core import Norm, in_ball, pairwise_distances
from .kcenters import KCentersParams, r_kcenters
from .oracle import OracleSpec
from .pipelines import PipelineConfig, run_pipeline
from .sources import ArraySource, Normalization


class _BallMixin:

    def _normalization(self, d):
        center = np.zeros(d) if self.data_center is None else np.asarray(self.data_center, dtype=float)
        if center.shape != (d,):
            raise ValueError(f"data_center must have {d} entries")
        return Normalization(tuple(center.tolist()), float(self.data_scale))

    def _to_ball(self, X, norm):
        nrm = self._normalization(X.shape[1])
        Y = nrm.apply(X)
        if not in_ball(Y, norm, tol=1e-9).all():
            raise ValueError("data fall outside the unit-diameter ball after "
                             "(X - data_center) * data_scale; lower data_scale")
        return nrm, Y


class _ReplicableClustering(_BallMixin, ClusterMixin, TransformerMixin, BaseEstimator):
    _p = 2

    def __init__(self, n_clusters=3, eps=0.5, rho=0.2, delta=0.05, norm="l2", oracle=None,
                 budget="desk", data_center=None, data_scale=1.0, data_seed=0,
                 random_state=0):
        self.n_clusters = n_clusters
        self.eps = eps
        self.rho = rho
        self.delta = delta
        self.norm = norm
        self.oracle = oracle
        self.budget = budget
        self.data_center = data_center
        self.data_scale = data_scale
        self.data_seed = data_seed
        self.random_state = random_state

    def _config(self) -> PipelineConfig:
        kw = dict(k=self.n_clusters, p=self._p, eps=self.eps, rho=self.rho, delta=self.delta,
                  norm=self.norm, oracle=self.oracle)
        if self.budget == "desk":
            return PipelineConfig.desk(**kw)
        if self.budget == "nominal":
            return PipelineConfig(**kw)
        if isinstance(self.budget, dict):
            return PipelineConfig.desk(**{**kw, **self.budget})
        raise ValueError("budget must be 'desk', 'nominal' or a dict of overrides")

    def fit(self, X, y=None, sample_weight=None):
        """Run the replicable pipeline on the empirical distribution of ``X``.

        Parameters
        ----------
        X : array-like of shape (n_samples, n_features)
        y : ignored
        sample_weight : array-like of shape (n_samples,), optional

        Returns
        -------
        self
        """
        X = check_array(X, dtype=np.float64)
        cfg = self._config()
        nrm, Y = self._to_ball(X, cfg.norm)
        w = None
        if sample_weight is not None:
            w = np.asarray(sample_weight, dtype=float)
            w = w / w.sum()
        seed = 0 if self.random_state is None else int(self.random_state)
        res = run_pipeline(ArraySource(Y, w, norm=cfg.norm), cfg, seed, self.data_seed,
                           evaluate_cost=False)
        self.result_ = res
        self.normalization_ = nrm
        self.n_features_in_ = X.shape[1]
        self.function_ = res.function if res.function is not None and not res.function.jl.identity else None
        self.cluster_centers_ = None if self.function_ is not None else nrm.invert(res.centers)
        self.Lambda_ = res.Lambda
        self.labels_ = self.predict(X)
        return self

    def _embedded(self, X):
        check_is_fitted(self, "result_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return self.normalization_.apply(X)

    def transform(self, X):
        """Distances to the centers in the normalized space, shape (n_samples, n_centers)."""
        Y = self._embedded(X)
        if self.function_ is not None:
            return pairwise_distances(self.function_.embed(Y), self.function_.centers, Norm.L2)
        return pairwise_distances(Y, self.result_.centers, Norm.parse(self.norm))

    def predict(self, X):
        """Index of the closest center for each row."""
        Y = self._embedded(X)
        if self.function_ is not None:
            return self.function_.classify(Y)
        return np.argmin(pairwise_distances(Y, self.result_.centers, Norm.parse(self.norm)), axis=1)

    def score(self, X, y=None):
        """Negative mean cost of ``X`` in the normalized space."""
        D = self.transform(X).min(axis=1)
        return -float((D ** self._p).mean())


class ReplicableKMeans(_ReplicableClustering):
    """Replicable k-means.

    Parameters
    ----------
    n_clusters : int, default 3
    eps, rho, delta : float
        Approximation, replicability and confidence targets.
    norm : {'l1', 'l2', 'linf'}, default 'l2'
    oracle : OracleSpec or dict, optional
    budget : 'desk', 'nominal' or dict, default 'desk'
        Sample-size policy; a dict overrides fields of the desk setting.
    data_center, data_scale : fixed normalization into the unit-diameter ball.
    data_seed : int
        Seeds the resampling of ``X``.
    random_state : int
        Seed of the internal randomness shared by paired runs.

    Attributes
    ----------
    cluster_centers_ : ndarray or None
        Centers in input coordinates; ``None`` when the fit went through a
        random projection (use ``predict``).
    labels_, Lambda_, result_, normalization_
    """

    _p = 2


class ReplicableKMedians(_ReplicableClustering):
    """Replicable k-medians; same parameters as :class:`ReplicableKMeans`."""

    _p = 1


class ReplicableKCenters(_BallMixin, ClusterMixin, BaseEstimator):
    """Replicable k-centers on a fixed grid of side ``grid_side``.

    ``coverage_n`` and ``coverage_q`` encode the assumption that every
    cluster of a good solution is observed among ``coverage_n`` samples
    with probability ``coverage_q``; they are taken on trust.
    """

    def __init__(self, n_clusters=3, grid_side=1 / 16, coverage_n=None, coverage_q=1.0,
                 rho=0.2, delta=0.05, norm="l2", budget_scale=1e-6, data_center=None,
                 data_scale=1.0, data_seed=0, random_state=0):
        self.n_clusters = n_clusters
        self.grid_side = grid_side
        self.coverage_n = coverage_n
        self.coverage_q = coverage_q
        self.rho = rho
        self.delta = delta
        self.norm = norm
        self.budget_scale = budget_scale
        self.data_center = data_center
        self.data_scale = data_scale
        self.data_seed = data_seed
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        norm = Norm.parse(self.norm)
        nrm, Y = self._to_ball(X, norm)
        params = KCentersParams(self.grid_side, self.n_clusters, self.coverage_n or self.n_clusters,
                                self.coverage_q, self.rho, self.delta, X.shape[1],
                                family=norm, budget_scale=self.budget_scale)
        from .pipelines import _seeds
        rng, data_rng = _seeds(0 if self.random_state is None else int(self.random_state),
                               self.data_seed)
        info = {}
        C = r_kcenters(ArraySource(Y, norm=norm), params,
                       OracleSpec("greedy_kcenters", beta=2.0), rng, data_rng, info)
        self.params_ = params
        self.info_ = info
        self.normalization_ = nrm
        self.centers_ball_ = C
        self.cluster_centers_ = nrm.invert(C)
        self.n_features_in_ = X.shape[1]
        self.labels_ = self.predict(X)
        return self

    def predict(self, X):
        check_is_fitted(self, "centers_ball_")
        Y = self.normalization_.apply(check_array(X, dtype=np.float64))
        return np.argmin(pairwise_distances(Y, self.centers_ball_, Norm.parse(self.norm)), axis=1)

    def radius(self, X) -> float:
        """Largest distance from a row of ``X`` to its center, in normalized units."""
        check_is_fitted(self, "centers_ball_")
        Y = self.normalization_.apply(check_array(X, dtype=np.float64))
        return float(pairwise_distances(Y, self.centers_ball_, Norm.parse(self.norm)).min(axis=1).max())


__all__ = ["ReplicableKMeans", "ReplicableKMedians", "ReplicableKCenters"]
