import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from replikit.core import Budget, SharedRandomness
from replikit.primitives import (HHParams, RoundingParams, mass_estimate_size, project_simplex,
                                 r_heavy_hitters, r_mass_estimate, r_round, r_sq,
                                 round_with_offsets, sq_size)

from conftest import categorical_draw, halfwidth, paired_rate


# sample-size formulas, values frozen from hand evaluation

def test_hh_sizes_frozen():
    p = HHParams(v=0.45, eps=0.1, rho=0.2, delta=0.05)
    assert math.ceil(p.n_candidates) == 14          # ln(2/(0.05*0.35))/0.35 = 13.54
    assert math.ceil(p.n_estimate(3)) == 10467579   # 648(ln 40 + 4 ln 2)/(0.04*0.01)


def test_rounding_params_frozen():
    r = RoundingParams(0.1, 0.2, 0.05)
    assert r.alpha == pytest.approx(0.2 / 1.1)
    assert r.eps_prime == pytest.approx(0.1 * 0.1 / 1.1)
    assert r.eps_prime < r.eps


def test_mass_and_sq_sizes_frozen():
    assert math.ceil(mass_estimate_size(2, 0.1, 0.2, 0.05)) == 1402249
    assert math.ceil(sq_size(0.05, 0.2, 0.05)) == 89271


def _nonincreasing(vals):
    return all(a >= b for a, b in zip(vals, vals[1:]))


EPS = [0.02, 0.05, 0.1, 0.2]
RHO = [0.2, 0.3, 0.5, 0.9]
DELTA = [0.001, 0.01, 0.05]


def test_estimate_size_monotone_in_all_arguments():
    f = lambda e, r, d: HHParams(0.5, e, r, d).n_estimate(4)  # noqa: E731
    assert _nonincreasing([f(e, 0.3, 0.05) for e in EPS])
    assert _nonincreasing([f(0.1, r, 0.05) for r in RHO])
    assert _nonincreasing([f(0.1, 0.3, d) for d in DELTA])


@pytest.mark.parametrize("f", [lambda e, r, d: mass_estimate_size(5, e, r, d),
                               lambda e, r, d: sq_size(e, r, d)])
def test_rounding_sizes_monotone_in_eps_and_rho(f):
    assert _nonincreasing([f(e, 0.3, 0.05) for e in EPS])
    assert _nonincreasing([f(0.1, r, 0.05) for r in RHO])
    # the rho - 2 delta margin makes these grow with delta
    assert f(0.1, 0.3, 0.05) > f(0.1, 0.3, 0.01)


def test_candidate_size_grows_with_eps():
    sizes = [HHParams(0.5, e, 0.3, 0.05).n_candidates for e in EPS]
    assert sizes == sorted(sizes)
    assert _nonincreasing([HHParams(0.5, 0.1, 0.3, d).n_candidates for d in DELTA])


def test_param_validation():
    with pytest.raises(ValueError):
        HHParams(0.4, 0.5, 0.2, 0.05)
    with pytest.raises(ValueError):
        HHParams(0.5, 0.1, 0.2, 0.1)
    with pytest.raises(ValueError):
        RoundingParams(0.1, 0.2, 0.1)


def test_round_hand_example():
    assert round_with_offsets([0.37], [0.05], 0.2)[0] == pytest.approx(0.35)
    assert round_with_offsets([0.35], [0.05], 0.2)[0] == pytest.approx(0.35)


@given(st.lists(st.floats(-3, 3), min_size=1, max_size=20), st.integers(0, 10 ** 6))
@settings(max_examples=100, deadline=None)
def test_round_matches_interval_oracle(vals, seed):
    params = RoundingParams(0.1, 0.2, 0.05)
    a = params.alpha
    out = r_round(vals, params, SharedRandomness(seed))
    offs = SharedRandomness(seed).generator().uniform(0.0, a, size=len(vals))
    for g, o, y in zip(vals, offs, out):
        z = math.floor((g - o) / a)
        assert y == pytest.approx(o + z * a + a / 2, abs=1e-12)
        assert abs(y - g) <= a / 2 + 1e-12


def test_round_split_rate():
    params = RoundingParams(0.12, 0.2, 0.0)
    a = params.alpha
    splits = 0
    for t in range(10_000):
        r = SharedRandomness(7).child(t)
        splits += r_round([0.370], params, r)[0] != r_round([0.372], params, r)[0]
    assert splits / 10_000 <= 2 * 0.002 / a


def _simplex_oracle(p):
    lo, hi = p.min() - 1.0, p.max()
    for _ in range(200):
        mid = (lo + hi) / 2
        if np.maximum(p - mid, 0).sum() > 1:
            lo = mid
        else:
            hi = mid
    return np.maximum(p - hi, 0)


@given(st.lists(st.floats(-1, 2), min_size=1, max_size=12))
@settings(max_examples=150, deadline=None)
def test_project_simplex(vals):
    p = np.asarray(vals)
    out = project_simplex(p)
    assert (out >= 0).all()
    assert abs(out.sum() - 1.0) <= 1e-12
    np.testing.assert_allclose(out, _simplex_oracle(p), atol=1e-9)


def test_project_simplex_uniform_shift():
    out = project_simplex(np.array([0.3, 0.3, 0.5]))
    np.testing.assert_allclose(out, [0.3 - 0.1 / 3, 0.3 - 0.1 / 3, 0.5 - 0.1 / 3])


def test_hh_point_mass():
    p = HHParams(0.5, 0.1, 0.2, 0.05)
    out = r_heavy_hitters(lambda n: np.zeros(n, dtype=int), p, SharedRandomness(0), Budget(1e-3))
    assert out == [0]


def test_hh_correctness_rate():
    p = HHParams(0.45, 0.1, 0.2, 0.05)
    hits = 0
    for t in range(100):
        draw = categorical_draw([0, 1, 2], [0.5, 0.3, 0.2], np.random.default_rng(t))
        hits += r_heavy_hitters(draw, p, SharedRandomness(t), Budget(1e-3)) == [0]
    assert hits / 100 >= 1 - 0.05 - halfwidth(0.95, 100)


def test_hh_rows_and_info():
    p = HHParams(0.3, 0.1, 0.2, 0.05)
    rows = np.array([[0, 1], [2, 3]])
    g = np.random.default_rng(0)
    info = {}
    out = r_heavy_hitters(lambda n: rows[g.integers(0, 2, n)], p, 1, Budget(1e-3), info=info)
    assert out == [(0, 1), (2, 3)]
    assert info["candidates"] == 2 and info["overflow"] == 0
    assert 0.3 - 0.2 / 3 <= info["threshold"] <= 0.3 - 0.1 / 3


def test_hh_domain_route():
    p = HHParams(0.45, 0.1, 0.2, 0.05, domain_bound=3)
    draw = categorical_draw([0, 1, 2], [0.6, 0.3, 0.1], np.random.default_rng(1))
    info = {}
    assert r_heavy_hitters(draw, p, 2, Budget(1e-3), domain=[0, 1, 2], info=info) == [0]
    assert info["n_candidates"] == 0


def test_hh_paired():
    p = HHParams(0.4, 0.1, 0.2, 0.05)

    def run(shared, g):
        return r_heavy_hitters(categorical_draw(["a", "b"], [0.5, 0.5 - 1e-6], g), p, shared,
                               Budget(1e-3))
    assert paired_rate(run, 50) >= 1 - 0.2 - halfwidth(0.8, 50)


def test_mass_estimate_properties():
    assert r_mass_estimate(lambda n: np.zeros(n, int), 1, 0.1, 0.2, 0.05, 0).tolist() == [1.0]
    with pytest.raises(ValueError):
        r_mass_estimate(lambda n: np.zeros(n, int), 0, 0.1, 0.2, 0.05, 0)
    ok = 0
    for t in range(100):
        g = np.random.default_rng(t)
        est = r_mass_estimate(lambda n: (g.random(n) >= 0.7).astype(int), 2, 0.1, 0.2, 0.05,
                              SharedRandomness(t), Budget(0.01))
        assert est.min() >= 0 and abs(est.sum() - 1) <= 1e-12
        ok += np.abs(est - [0.7, 0.3]).max() <= 0.1
    assert ok / 100 >= 1 - 0.05 - halfwidth(0.95, 100)


def test_mass_estimate_rejects_bad_labels():
    with pytest.raises(ValueError):
        r_mass_estimate(lambda n: np.full(n, 3), 2, 0.1, 0.2, 0.05, 0, Budget(1e-4))


def test_mass_estimate_paired():
    def run(shared, g):
        return r_mass_estimate(lambda n: g.integers(0, 8, n), 8, 0.1, 0.2, 0.05, shared,
                               Budget(0.01)).tolist()
    assert paired_rate(run, 50) >= 1 - 0.2 - halfwidth(0.8, 50)


def test_sq_examples():
    for t in range(20):
        est = r_sq(lambda X: np.full(len(X), 0.5), lambda n: np.zeros((n, 1)), 0.05, 0.2, 0.05,
                   SharedRandomness(t), Budget(0.01))
        assert abs(est - 0.5) <= 0.05
    ok = 0
    for t in range(100):
        g = np.random.default_rng(t)
        est = r_sq(lambda X: X[:, 0], lambda n: (g.random((n, 1)) < 0.3).astype(float), 0.05,
                   0.2, 0.05, SharedRandomness(t))
        ok += 0.25 <= est <= 0.35
    assert ok / 100 >= 1 - 0.05 - halfwidth(0.95, 100)
    with pytest.raises(ValueError):
        r_sq(lambda X: X[:, 0] + 2, lambda n: np.zeros((n, 1)), 0.05, 0.2, 0.05, 0, Budget(0.01))
