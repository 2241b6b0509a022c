"""Batch-job progress as an integral over a piecewise-constant core timeline.

Completion is the earliest time at which accumulated core-seconds reach the
job's total work. All arithmetic runs on exact rationals (floats convert
losslessly), so the result agrees with closed-form piecewise evaluation to
the last bit.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

from ..errors import NeverCompletes, SpecViolation

Step = tuple[float, float]  # (start time, cores from that time on)


def simulate_batch(total_work: float, timeline: Sequence[Step]) -> float:
    """Earliest t with integral of cores(tau) d tau >= total_work.

    timeline is a step function: (t_i, c_i) means c_i cores from t_i until
    the next entry; the last entry extends forever.
    """
    if total_work <= 0:
        raise SpecViolation("total work must be positive")
    if not timeline:
        raise SpecViolation("timeline is empty")
    times = [Fraction(float(t)) for t, _ in timeline]
    cores = [Fraction(float(c)) for _, c in timeline]
    for c in cores:
        if c < 0:
            raise SpecViolation("core count cannot be negative")
    for a, b in zip(times, times[1:]):
        if b <= a:
            raise SpecViolation("timeline times must be strictly increasing")

    work = Fraction(float(total_work))
    acc = Fraction(0)
    for i in range(len(times) - 1):
        seg = cores[i] * (times[i + 1] - times[i])
        if acc + seg >= work:
            return float(times[i] + (work - acc) / cores[i])
        acc += seg
    if cores[-1] > 0:
        return float(times[-1] + (work - acc) / cores[-1])
    raise NeverCompletes(
        f"timeline accumulates {float(acc)} core-seconds of {float(total_work)} needed"
    )
