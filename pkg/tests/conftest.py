import math

import numpy as np
import pytest

from replikit.core import SharedRandomness


def halfwidth(rate, n, z=1.96):
    """Normal-approximation half-width of a binomial proportion."""
    return z * math.sqrt(max(rate * (1 - rate), 0.0) / n)


def paired_rate(fn, trials, seed=0):
    """Fraction of trials where ``fn(shared_rng, data_gen_a)`` equals ``fn(shared_rng, data_gen_b)``."""
    hits = 0
    for t in range(trials):
        shared = SharedRandomness(seed).child("paired", t)
        a = fn(shared, np.random.default_rng([seed, t, 0]))
        b = fn(shared, np.random.default_rng([seed, t, 1]))
        hits += _equal(a, b)
    return hits / trials


def _equal(a, b):
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return bool(np.array_equal(np.asarray(a), np.asarray(b)))
    return a == b


def categorical_draw(labels, probs, gen):
    """``draw(n)`` returning i.i.d. labels from a categorical distribution."""
    labels = np.asarray(labels)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0

    def draw(n):
        return labels[np.searchsorted(cdf, gen.random(n), side="right")]
    return draw


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
