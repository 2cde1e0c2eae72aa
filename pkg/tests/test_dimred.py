import json
import math

import numpy as np
import pytest

from replikit.core import Norm, NormSpec, SharedRandomness
from replikit.dimred import (ClusteringFunction, classify, make_jl, partition_cost, target_dim)
from replikit.grid import FixedGrid
from replikit.oracle import assign, clustering_cost


def test_target_dim_example():
    assert 4 * math.log(60) == pytest.approx(16.377, abs=1e-3)
    assert target_dim(1, 0.5, 3, 0.1) == 17


def test_target_dim_monotone_in_eps():
    dims = [target_dim(2, e, 3, 0.1) for e in (0.9, 0.7, 0.5, 0.3, 0.1)]
    assert dims == sorted(dims)


def test_target_dim_p4_factor():
    C = 0.01  # keep ceilings out of the ratio
    raw1 = C * 1 / 0.5 ** 2 * math.log(3 / 0.05)
    assert target_dim(2, 0.5, 3, 0.1, C=C) == math.ceil(16 * raw1)
    assert target_dim(1, 0.5, 3, 0.1, C=C) == math.ceil(raw1)


def test_target_dim_validation():
    with pytest.raises(ValueError):
        target_dim(1, 0.0, 3, 0.1)


def test_frame_gram_identity():
    jl = make_jl(64, 17, SharedRandomness(0).child("jl"))
    F = jl.frame
    assert np.abs(F @ F.T - np.eye(17)).max() <= 1e-9
    assert np.linalg.norm(jl.matrix, 2) <= math.sqrt(64) + 1e-9


def test_full_rank_preserves_norms(gen):
    jl = make_jl(8, 7, SharedRandomness(1))
    assert not jl.identity
    full = make_jl(8, 8, SharedRandomness(1))
    X = gen.normal(size=(50, 8))
    assert np.allclose(np.linalg.norm(full.apply(X), axis=1), np.linalg.norm(X, axis=1), atol=1e-9)


def test_identity_when_target_not_smaller():
    jl = make_jl(3, 5, SharedRandomness(0))
    assert jl.identity and jl.m == 3
    X = np.ones((2, 3))
    assert np.array_equal(jl.apply(X), X)


def test_jl_norm_statistics():
    m = target_dim(1, 0.5, 3, 0.1)
    jl = make_jl(64, m, SharedRandomness(2).child("jl"))
    gen = np.random.default_rng(3)
    U = gen.normal(size=(1000, 64))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    r = np.linalg.norm(jl.apply(U), axis=1)
    assert np.mean((r >= 1 / 1.5) & (r <= 1.5)) >= 0.95


def test_jl_deterministic():
    a = make_jl(32, 6, SharedRandomness(4).child("jl"))
    b = make_jl(32, 6, SharedRandomness(4).child("jl"))
    assert np.array_equal(a.matrix, b.matrix)
    c = make_jl(32, 6, SharedRandomness(5).child("jl"))
    assert not np.array_equal(a.matrix, c.matrix)


def test_apply_dimension_check():
    with pytest.raises(ValueError):
        make_jl(4, 2, 0).apply(np.zeros((1, 3)))


def _function(seed=0, d=16, m=4, k=3, side=1 / 64):
    gen = np.random.default_rng(seed)
    jl = make_jl(d, m, SharedRandomness(seed))
    centers = gen.uniform(-0.2, 0.2, size=(k, m))
    return ClusteringFunction(1 / math.sqrt(d), side, jl, centers, 2)


def test_clustering_function_json_roundtrip():
    f = _function()
    g = ClusteringFunction.from_dict(json.loads(f.to_json()))
    assert g.to_json() == f.to_json()
    X = np.random.default_rng(1).uniform(-0.1, 0.1, size=(200, 16))
    assert np.array_equal(f.classify(X), g.classify(X))


def test_classify_matches_oracle_assignment():
    f = _function()
    X = np.random.default_rng(2).uniform(-0.5, 0.5, size=(10_000, 16)) / 4
    lab = classify(f, X)
    Z = f.embed(X)
    ref, dist = assign(Z, f.centers, NormSpec(Norm.L2, 2, f.jl.m))
    assert np.array_equal(lab, ref)
    assert set(np.unique(lab)) <= set(range(f.k))
    cost = float(np.mean(((Z - f.centers[lab]) ** 2).sum(axis=1)))
    assert cost == pytest.approx(clustering_cost(Z, f.centers, NormSpec(Norm.L2, 2, f.jl.m)), abs=1e-9)


def test_classify_constant_on_fine_cells():
    f = _function(side=1 / 16)
    gen = np.random.default_rng(3)
    # scaled points in one fine cell share a label
    cell_lo = np.full(16, 1 / 16)
    Y = cell_lo + gen.uniform(0.001, 1 / 16 - 0.001, size=(100, 16))
    X = Y / f.scale
    assert len(np.unique(f.classify(X))) == 1
    assert np.array_equal(FixedGrid(1 / 16).snap(Y), np.tile(FixedGrid(1 / 16).snap(Y[:1]), (100, 1)))


def test_classify_single_point():
    f = _function()
    x = np.zeros(16)
    assert classify(f, x) == int(f.classify(x[None, :])[0])


def test_classify_center_preimage():
    # identity function: a center is labeled as itself
    centers = np.array([[-0.2, 0.0], [0.2, 0.1]])
    f = ClusteringFunction(1.0, None, make_jl(2, 2, None), centers, 2)
    assert classify(f, centers[1]) == 1
    assert classify(f, centers[0]) == 0


def test_partition_cost():
    X = np.array([[0.0], [0.5], [0.2]])
    assert partition_cost(X, np.array([0, 0, 1]), 2, 2) == pytest.approx(2 * 0.0625 / 3)
    assert partition_cost(X, np.array([0, 0, 0]), 1, 1) == pytest.approx(0.5 / 3)
