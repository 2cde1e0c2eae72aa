import math

import numpy as np
import pytest

from replikit.core import Budget, BudgetExceededError, Norm, NormSpec, SharedRandomness
from replikit.coreset import (CoresetParams, WeightedCoreset, build_coreset, build_quad_tree,
                              coreset_derived, layer_bound, shift_eps)
from replikit.grid import cell_center, locate
from replikit.sources import FiniteWeighted, Sampler

from conftest import halfwidth

L2_1 = NormSpec(Norm.L2, 1, 1)


def _sampler(points, weights=None, seed=0):
    return Sampler(FiniteWeighted(points, weights), np.random.default_rng(seed))


@pytest.mark.parametrize("p,Delta,eps,Lam,t", [(1, 1.0, 0.5, 0.4, 6), (2, 1.0, 1.0, 0.8, 3)])
def test_layer_bound_examples(p, Delta, eps, Lam, t):
    assert layer_bound(p, 1.0, Delta, eps, Lam) == t


@pytest.mark.parametrize("p", [1, 2])
@pytest.mark.parametrize("Lam", [0.003, 0.05, 0.4, 1.0])
@pytest.mark.parametrize("Delta", [1.0, math.sqrt(2), 3.0])
def test_layer_bound_minimal(p, Lam, Delta):
    t = layer_bound(p, 1.0, Delta, 0.5, Lam)
    guard = 0.5 * Lam / 5
    assert (2.0 ** (1 - t) * Delta) ** p <= guard
    if t > 1:
        assert (2.0 ** (2 - t) * Delta) ** p > guard


def test_derived_quantities_example():
    params = CoresetParams(0.5, 2, 0.3, 0.05, 0.4, L2_1)
    t, M, gamma, levels = coreset_derived(params)
    assert (t, M) == (6, 64.0)
    # eps / (5 t k M (2 Delta)^p) with eps=0.5, t=6, k=2, M=64
    assert gamma == pytest.approx(0.5 / 7680)
    vs = [lv[0] for lv in levels]
    assert all(b == pytest.approx(2 * a) for a, b in zip(vs, vs[1:]))
    assert all(lv[1] == lv[0] / 2 and lv[2] == 0.3 / 6 and lv[3] == 0.05 / 6 for lv in levels)


def test_shift_eps_and_p2_M():
    assert shift_eps(0.5, 1) == 0.5
    assert shift_eps(0.5, 2) == 0.25 / 64
    params = CoresetParams(0.5, 2, 0.3, 0.05, 0.4, NormSpec(Norm.L2, 2, 1))
    assert params.M == 32 * 64 / 0.25


def test_threshold_capped():
    params = CoresetParams(0.5, 2, 0.3, 0.05, 0.4, L2_1, gamma=0.5)
    assert params.threshold(1) == pytest.approx(0.4)
    assert params.threshold(3) == 1.0


def test_m_cap_error():
    params = CoresetParams(0.5, 3, 0.3, 0.05, 0.01, NormSpec(Norm.L2, 2, 8))
    with pytest.raises(BudgetExceededError):
        coreset_derived(params)


def test_params_validation():
    with pytest.raises(ValueError):
        CoresetParams(0.5, 2, 0.3, 0.05, 0.4, NormSpec(Norm.L2, 3, 1))
    with pytest.raises(ValueError):
        CoresetParams(0.5, 2, 0.3, 0.2, 0.4, L2_1)


def test_point_mass_chain():
    params = CoresetParams(0.5, 1, 0.3, 0.05, 0.01, L2_1, gamma=0.1, weight_eps=0.1)
    cs = build_coreset(_sampler([[0.0]]), params, SharedRandomness(0), Budget(1e-3, 200_000))
    t = params.t
    assert cs.tree.special_level == t
    assert all(len(h) == 1 for h in cs.tree.heavy)
    # deepest heavy cell holds 0 in its lower corner: center = 2**-(t-1) / 2
    assert cs.reps.tolist() == [[2.0 ** -t]]
    assert cs.weights.tolist() == [1.0]


def test_two_point_masses():
    params = CoresetParams(0.5, 2, 0.3, 0.05, 0.05, L2_1, gamma=0.1, weight_eps=0.1)
    cs = build_coreset(_sampler([[-0.25], [0.25]], [0.5, 0.5]), params, SharedRandomness(1),
                       Budget(1e-3, 200_000))
    assert len(cs) == 2
    assert cs.reps[0, 0] < 0 < cs.reps[1, 0]
    assert np.abs(cs.reps[:, 0] - [-0.25, 0.25]).max() <= 2.0 ** (1 - params.t)


def test_four_points_weights():
    pts = [[-0.3, -0.3], [-0.3, 0.3], [0.3, -0.3], [0.3, 0.3]]
    params = CoresetParams(1.0, 4, 0.3, 0.05, 0.05, NormSpec(Norm.LINF, 1, 2), gamma=0.1,
                           weight_eps=0.05)
    cs = build_coreset(_sampler(pts), params, SharedRandomness(2), Budget(1e-3, 200_000))
    assert len(cs) == 4
    assert np.abs(cs.weights - 0.25).max() <= 0.05
    assert abs(cs.weights.sum() - 1.0) <= 1e-12 and cs.weights.min() >= 0


def _tree(seed=3):
    from replikit.sources import TruncGaussMixture
    params = CoresetParams(0.5, 3, 0.3, 0.05, 0.01, NormSpec(Norm.L2, 1, 2), gamma=0.1)
    sampler = Sampler(TruncGaussMixture(), np.random.default_rng(seed))
    return params, build_quad_tree(sampler, params, SharedRandomness(seed), Budget(1e-3, 100_000))


def test_representative_map_properties():
    params, tree = _tree()
    X = np.random.default_rng(9).uniform(-0.5, 0.5, (10_000, 2))
    idx = tree.region_index(X)
    assert idx.min() >= 0 and idx.max() < len(tree.reps)
    R = tree.representative_map(X)
    assert np.array_equal(tree.representative_map(R), R)
    heavy = [set(map(tuple, h.tolist())) for h in tree.heavy]
    for x, r in zip(X[:2000], R[:2000]):
        j = max(i for i in range(len(heavy)) if locate(x, i).coords in heavy[i])
        assert np.linalg.norm(x - r) <= 2.0 ** -j * params.Delta + 1e-12


def test_regions_tile_cube():
    params, tree = _tree()
    leaves = [c for i in range(1, tree.depth + 2) for c in tree.light_cells(i)]
    leaves += tree.special_cells()
    assert sum(c.side ** 2 for c in leaves) == pytest.approx(1.0)
    for i in range(1, tree.depth + 1):
        parents = set(tree.heavy_cells(i - 1))
        assert all(c.parent() in parents for c in tree.heavy_cells(i))


def test_marked_cells_are_own_representatives():
    _, tree = _tree()
    reps = {tuple(r) for r in tree.reps.tolist()}
    for i in range(tree.depth + 1):
        kids_heavy = {c.parent() for c in tree.heavy_cells(i + 1)} if i < tree.depth else set()
        for c in tree.heavy_cells(i):
            if c not in kids_heavy:
                assert tuple(cell_center(c).tolist()) in reps


def test_size_bound_holds():
    params, tree = _tree()
    assert len(tree.reps) <= params.size_bound()


def test_paired_builds_identical_rate():
    from replikit.sources import TwoMoons
    params = CoresetParams(0.5, 3, 0.3, 0.05, 0.02, NormSpec(Norm.L2, 2, 2), gamma=0.1,
                           weight_eps=0.1)
    same = 0
    for t in range(20):
        out = []
        for ds in (0, 1):
            s = Sampler(TwoMoons(), np.random.default_rng([t, ds]))
            out.append(build_coreset(s, params, SharedRandomness(t), Budget(1e-3, 100_000),
                                     weight_budget=Budget(1e-2, 200_000)).artifact())
        same += out[0] == out[1]
    assert same / 20 >= 1 - 0.3 - halfwidth(0.7, 20)


def test_save_load_roundtrip(tmp_path):
    params = CoresetParams(0.5, 2, 0.3, 0.05, 0.05, L2_1, gamma=0.1, weight_eps=0.1)
    cs = build_coreset(_sampler([[-0.25], [0.25]], [0.5, 0.5]), params, 1, Budget(1e-3, 200_000))
    csv_path, json_path = cs.save(tmp_path / "cs")
    back = WeightedCoreset.load(tmp_path / "cs")
    assert np.array_equal(back.reps, cs.reps)
    np.testing.assert_allclose(back.weights, cs.weights / cs.weights.sum(), rtol=0, atol=1e-15)
    assert back.provenance["size"] == 2
    assert cs.cost(np.array([[0.0]]), L2_1) == pytest.approx(float(np.abs(cs.reps[:, 0]) @ cs.weights))
