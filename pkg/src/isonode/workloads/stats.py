"""Latency statistics: nearest-rank percentiles and sample histograms."""

from __future__ import annotations

import numpy as np

from ..errors import EmptySamples, SpecViolation


def nearest_rank(p: float, n: int) -> int:
    """1-based rank ceil(p*n), computed in exact integer arithmetic.

    Floating multiplication would put 0.99*100 a hair above 99 and shift the
    rank, so the ratio is taken from the float's exact integer numerator and
    denominator instead.
    """
    num, den = float(p).as_integer_ratio()
    return -((-num * n) // den)


def percentile(samples, p: float) -> float:
    """Nearest-rank percentile: the sorted sample at rank ceil(p*n)."""
    if not 0.0 < p <= 1.0:
        raise SpecViolation(f"percentile fraction must be in (0, 1], got {p}")
    arr = np.asarray(samples, dtype=np.float64)
    if arr.size == 0:
        raise EmptySamples("percentile of no samples")
    k = nearest_rank(p, arr.size)
    return float(np.partition(arr, k - 1)[k - 1])


class LatencyHistogram:
    """Immutable bag of latency samples (milliseconds) with derived stats."""

    __slots__ = ("_samples",)

    def __init__(self, samples_ms) -> None:
        self._samples = np.array(samples_ms, dtype=np.float64, copy=True)
        self._samples.flags.writeable = False

    @property
    def samples(self) -> np.ndarray:
        return self._samples

    @property
    def count(self) -> int:
        return int(self._samples.size)

    @property
    def mean(self) -> float:
        if self._samples.size == 0:
            return 0.0
        return float(self._samples.mean())

    @property
    def max(self) -> float:
        if self._samples.size == 0:
            return 0.0
        return float(self._samples.max())

    def percentile(self, p: float) -> float:
        return percentile(self._samples, p)

    def summary(self) -> dict[str, float]:
        if self.count == 0:
            return {"count": 0, "mean": 0.0, "p50": 0.0, "p95": 0.0, "p99": 0.0, "max": 0.0}
        return {
            "count": self.count,
            "mean": self.mean,
            "p50": self.percentile(0.50),
            "p95": self.percentile(0.95),
            "p99": self.percentile(0.99),
            "max": self.max,
        }
