from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isonode.errors import EmptySamples, SpecViolation
from isonode.workloads import LatencyHistogram, percentile
from isonode.workloads.stats import nearest_rank


def brute_force(samples, p) -> float:
    """Independent oracle: full sort + exact ceil on the true rational rank."""
    s = sorted(samples)
    k = math.ceil(Fraction(p) * len(s))
    return s[k - 1]


def test_rank_examples():
    # p=0.99 over 100 samples selects the 99th order statistic, not the 100th:
    # the rank must come from exact arithmetic, float 0.99*100 rounds up.
    assert nearest_rank(0.99, 100) == 99
    assert nearest_rank(0.99, 1000) == 990
    assert nearest_rank(0.5, 10) == 5
    assert nearest_rank(0.5, 11) == 6
    assert nearest_rank(1.0, 7) == 7
    assert nearest_rank(0.001, 5) == 1


def test_percentile_examples():
    assert percentile(list(range(1, 101)), 0.99) == 99
    assert percentile([5.0], 0.5) == 5.0
    assert percentile([3, 1, 2], 1.0) == 3


def test_percentile_validates():
    with pytest.raises(EmptySamples):
        percentile([], 0.99)
    with pytest.raises(SpecViolation):
        percentile([1.0], 0.0)
    with pytest.raises(SpecViolation):
        percentile([1.0], 1.5)


def test_percentile_matches_brute_force_bulk():
    rng = np.random.default_rng(11)
    for _ in range(300):
        n = int(rng.integers(1, 400))
        samples = rng.exponential(50.0, size=n)
        for p in (0.5, 0.9, 0.95, 0.99, 0.999, 1.0):
            assert percentile(samples, p) == brute_force(list(samples), p)


@settings(max_examples=120, deadline=None)
@given(
    samples=st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=120),
    p=st.floats(0.001, 1.0, allow_nan=False),
)
def test_percentile_property(samples, p):
    assert percentile(samples, p) == brute_force(samples, p)


def test_histogram_summary():
    h = LatencyHistogram([10.0, 20.0, 30.0, 40.0])
    s = h.summary()
    assert s["count"] == 4
    assert s["mean"] == pytest.approx(25.0)
    assert s["p50"] == 20.0
    assert s["max"] == 40.0
    assert h.percentile(1.0) == 40.0


def test_histogram_empty():
    h = LatencyHistogram([])
    s = h.summary()
    assert s["count"] == 0 and s["mean"] == 0.0 and s["p99"] == 0.0
    with pytest.raises(EmptySamples):
        h.percentile(0.99)
