"""Per-core FIFO queueing model with shortest-queue dispatch.

Arrivals join the shortest queue (assigned-but-not-completed count, ties to
the lowest core id); each core serves FIFO. Service times are drawn up front
from a seeded generator, so runs are deterministic. A configurable contention
curve stretches service times by the number of busy cores sharing a kernel
domain; isolated domains never see each other.

Core counts may change between advances: a removed core finishes its current
request but accepts no new work, and its waiting requests re-dispatch
immediately in arrival order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import SpecViolation
from .generate import ArrivalSchedule
from .kernels import advance_queue
from .stats import LatencyHistogram


@dataclass(frozen=True)
class ContentionCurve:
    """slowdown(n) = 1 + alpha * max(0, n - 1) over n domain contenders.

    mode "isolated": only this simulation's busy cores count.
    mode "shared-kernel": external_contenders more processes share the domain.
    """

    alpha: float = 0.05
    mode: str = "isolated"
    external_contenders: float = 0.0

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise SpecViolation("contention alpha cannot be negative")
        if self.mode not in ("isolated", "shared-kernel"):
            raise SpecViolation(f"unknown contention mode {self.mode!r}")
        if self.external_contenders < 0:
            raise SpecViolation("external contender count cannot be negative")

    @property
    def ext_n(self) -> float:
        return self.external_contenders if self.mode == "shared-kernel" else 0.0

    def slowdown(self, n: int) -> float:
        return 1.0 + self.alpha * max(0.0, n - 1.0)


NO_CONTENTION = ContentionCurve(alpha=0.0)


@dataclass(frozen=True)
class ServiceTime:
    """Service-time distribution: deterministic, exponential, or empirical."""

    kind: str  # "deterministic" | "exponential" | "empirical"
    value: float = 0.0  # seconds (fixed value or mean)
    samples: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("deterministic", "exponential", "empirical"):
            raise SpecViolation(f"unknown service time kind {self.kind!r}")

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "deterministic":
            return np.full(n, self.value, dtype=np.float64)
        if self.kind == "exponential":
            return rng.exponential(self.value, n)
        if self.kind == "empirical":
            if not self.samples:
                raise SpecViolation("empirical service time needs samples")
            return rng.choice(np.asarray(self.samples, dtype=np.float64), size=n)
        raise SpecViolation(f"unknown service time kind {self.kind!r}")


class QueueSim:
    """Resumable event simulation over a fixed arrival/service schedule."""

    def __init__(
        self,
        arrivals: np.ndarray,
        services: np.ndarray,
        cores: int,
        max_cores: int | None = None,
        contention: ContentionCurve = NO_CONTENTION,
    ):
        arr = np.ascontiguousarray(arrivals, dtype=np.float64)
        svc = np.ascontiguousarray(services, dtype=np.float64)
        if arr.shape != svc.shape:
            raise SpecViolation("arrivals and service times must align")
        if cores < 1:
            raise SpecViolation("need at least one core")
        if np.any(svc < 0):
            raise SpecViolation("negative service time")
        if arr.size > 1 and np.any(np.diff(arr) < 0):
            raise SpecViolation("arrivals must be non-decreasing")
        m = max_cores if max_cores is not None else cores
        if m < cores:
            raise SpecViolation("max_cores below initial cores")
        self.arr = arr
        self.svc = svc
        self.n = int(arr.size)
        self.k = cores
        self.max_cores = m
        self.contention = contention
        self.busy_until = np.full(m, np.inf, dtype=np.float64)
        self.serving = np.full(m, -1, dtype=np.int64)
        self.q_head = np.full(m, -1, dtype=np.int64)
        self.q_tail = np.full(m, -1, dtype=np.int64)
        self.qlen = np.zeros(m, dtype=np.int64)
        self.q_next = np.full(self.n, -1, dtype=np.int64)
        self.comp_t = np.full(self.n, np.nan, dtype=np.float64)
        self.comp_order = np.full(self.n, -1, dtype=np.int64)
        self.cursor = np.zeros(2, dtype=np.int64)

    @property
    def completed(self) -> int:
        return int(self.cursor[1])

    @property
    def done(self) -> bool:
        return self.completed == self.n

    def advance_to(self, t_limit: float) -> list[tuple[int, float]]:
        """Process events through t_limit; returns (request, completion) pairs."""
        before = self.completed
        advance_queue(
            float(t_limit),
            self.k,
            self.max_cores,
            self.n,
            self.arr,
            self.svc,
            float(self.contention.alpha),
            float(self.contention.ext_n),
            self.busy_until,
            self.serving,
            self.q_head,
            self.q_tail,
            self.qlen,
            self.q_next,
            self.comp_t,
            self.comp_order,
            self.cursor,
        )
        out = []
        for r in self.comp_order[before : self.completed]:
            out.append((int(r), float(self.comp_t[r])))
        return out

    def run_to_end(self) -> None:
        self.advance_to(np.inf)
        if not self.done:
            raise SpecViolation("simulation stalled with requests outstanding")

    def set_cores(self, k: int, at: float) -> None:
        """Change the active core count at virtual time `at`.

        Shrinking leaves in-flight work draining on the retiring cores;
        their waiting requests re-dispatch now, in arrival order. Growing
        rebalances all waiting requests so onlined cores start immediately.
        """
        if k < 1:
            raise SpecViolation("need at least one core")
        if k > self.max_cores:
            raise SpecViolation(f"core count {k} above simulation maximum {self.max_cores}")
        old, self.k = self.k, k
        if k == old:
            return
        lo = k if k < old else 0  # shrink: retired slots only; grow: all
        displaced: list[int] = []
        for s in range(lo, max(k, old)):
            r = self.q_head[s]
            while r >= 0:
                displaced.append(int(r))
                self.qlen[s] -= 1
                r = self.q_next[r]
            self.q_head[s] = -1
            self.q_tail[s] = -1
        displaced.sort()  # request index order == arrival order
        for r in displaced:
            self._dispatch(r, at)

    def _dispatch(self, req: int, t: float) -> None:
        best = 0
        bq = self.qlen[0]
        for s in range(1, self.k):
            if self.qlen[s] < bq:
                bq = self.qlen[s]
                best = s
        self.qlen[best] += 1
        if self.serving[best] < 0:
            nbusy = int(np.count_nonzero(self.serving >= 0))
            slow = 1.0 + self.contention.alpha * max(0.0, nbusy + self.contention.ext_n)
            self.serving[best] = req
            self.busy_until[best] = t + self.svc[req] * slow
        else:
            if self.q_tail[best] >= 0:
                self.q_next[self.q_tail[best]] = req
            else:
                self.q_head[best] = req
            self.q_tail[best] = req
            self.q_next[req] = -1

    def latencies_ms(self) -> np.ndarray:
        """Completion minus arrival, in milliseconds, for completed requests."""
        done = self.comp_order[: self.completed]
        return (self.comp_t[done] - self.arr[done]) * 1e3


@dataclass(frozen=True)
class ServiceModel:
    """Static description of the service instance's queueing behavior."""

    cores: int
    service_time: ServiceTime
    contention: ContentionCurve = NO_CONTENTION
    max_cores: int | None = None


def simulate_service(
    model: ServiceModel, schedule: ArrivalSchedule, seed: int = 0
) -> LatencyHistogram:
    """Run the whole schedule to completion and return latencies in ms."""
    rng = np.random.default_rng(seed)
    services = model.service_time.draw(len(schedule), rng)
    sim = QueueSim(
        schedule.times,
        services,
        model.cores,
        max_cores=model.max_cores,
        contention=model.contention,
    )
    sim.run_to_end()
    return LatencyHistogram(sim.latencies_ms())
