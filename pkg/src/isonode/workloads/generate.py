"""Arrival schedule generators: uniform rate, seeded Poisson, recorded traces."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BadRate, SpecViolation


@dataclass(frozen=True)
class ArrivalSchedule:
    """Non-decreasing arrival times in seconds plus a label for reports."""

    times: np.ndarray
    source: str = "trace"

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(self.times, dtype=np.float64)
        if arr.ndim != 1:
            raise SpecViolation("arrival times must be one-dimensional")
        if arr.size > 1 and np.any(np.diff(arr) < 0):
            raise SpecViolation("arrival times must be non-decreasing")
        object.__setattr__(self, "times", arr)

    def __len__(self) -> int:
        return int(self.times.size)

    @property
    def mean_rate(self) -> float:
        if self.times.size < 2:
            return 0.0
        span = float(self.times[-1] - self.times[0])
        return (self.times.size / span) if span > 0 else 0.0


def gen_uniform(rate: float, duration_s: float, start: float = 0.0) -> ArrivalSchedule:
    """floor(rate * duration) arrivals, the i-th at start + i/rate.

    The count is taken with a one-nanosecond guard so that a rate derived by
    division (say 482400 requests over 2250 s) does not lose its last arrival
    to float rounding.
    """
    if rate <= 0:
        raise BadRate(f"rate must be positive, got {rate}")
    if duration_s < 0:
        raise SpecViolation("duration cannot be negative")
    n = int(rate * duration_s + 1e-9)
    times = start + np.arange(n, dtype=np.float64) / rate
    return ArrivalSchedule(times=times, source=f"uniform({rate:g}/s)")


def gen_poisson(rate: float, duration_s: float, seed: int, start: float = 0.0) -> ArrivalSchedule:
    """Poisson process of the given rate, deterministic for a seed."""
    if rate <= 0:
        raise BadRate(f"rate must be positive, got {rate}")
    if duration_s < 0:
        raise SpecViolation("duration cannot be negative")
    rng = np.random.default_rng(seed)
    # Draw in chunks until the horizon is passed.
    gaps: list[np.ndarray] = []
    total = 0.0
    est = max(16, int(rate * duration_s * 1.2) + 16)
    while total < duration_s:
        chunk = rng.exponential(1.0 / rate, est)
        gaps.append(chunk)
        total += float(chunk.sum())
    times = np.concatenate(gaps).cumsum()
    times = times[times < duration_s]
    return ArrivalSchedule(times=start + times, source=f"poisson({rate:g}/s, seed={seed})")


def from_times(times, source: str = "trace") -> ArrivalSchedule:
    return ArrivalSchedule(times=np.asarray(times, dtype=np.float64), source=source)


def load_trace(path: str, start: float = 0.0) -> ArrivalSchedule:
    """One arrival time (seconds) per line."""
    times = np.loadtxt(path, dtype=np.float64, ndmin=1)
    return ArrivalSchedule(times=start + times, source=f"trace({path})")
