"""Per-worker counters folding into a shared global count under a lock.

Each worker accumulates increments locally and folds them into the domain's
global count once the batch threshold is reached, taking the domain's
exclusive lock for the fold. Isolated domains each have their own global
count and lock; a shared domain funnels every worker through one lock.

fold_cost_s models the time the fold holds the lock: pulling the global
count's cache line across cores and writing it back is what makes a shared
counter expensive, and on this emulator that physical cost has to be stated
explicitly (a Python integer add under a lock is otherwise too cheap and
too noisy to measure a direction). The default experiment uses 20
microseconds; bound and conservation checks use zero.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from ..errors import SpecViolation

DEFAULT_FOLD_COST_S = 20e-6
BASE_OP_S = 1e-7  # modeled cost of a purely local increment


class DomainCounter:
    """One sharing domain: per-worker locals, a batch limit, a locked global."""

    def __init__(self, batch: int, fold_cost_s: float = 0.0):
        if batch < 1:
            raise SpecViolation("batch threshold must be at least 1")
        if fold_cost_s < 0:
            raise SpecViolation("fold cost cannot be negative")
        self.batch = batch
        self.fold_cost_s = fold_cost_s
        self.global_count = 0
        self.lock_acquisitions = 0
        self.acquisitions_by_worker: dict[int, int] = {}
        self._locals: dict[int, int] = {}
        self._lock = threading.Lock()

    def add(self, worker: int, delta: int) -> str:
        """Returns "local" or "flushed" depending on whether the fold ran."""
        if delta < 0:
            raise SpecViolation("only non-negative increments")
        local = self._locals.get(worker, 0) + delta
        if local >= self.batch:
            with self._lock:
                if self.fold_cost_s > 0.0:
                    time.sleep(self.fold_cost_s)
                self.global_count += local
                self.lock_acquisitions += 1
                self.acquisitions_by_worker[worker] = (
                    self.acquisitions_by_worker.get(worker, 0) + 1
                )
            self._locals[worker] = 0
            return "flushed"
        self._locals[worker] = local
        return "local"

    def local_of(self, worker: int) -> int:
        return self._locals.get(worker, 0)

    def fold_all(self) -> None:
        """Flush every non-zero local into the global count."""
        for worker, local in list(self._locals.items()):
            if local == 0:
                continue
            with self._lock:
                if self.fold_cost_s > 0.0:
                    time.sleep(self.fold_cost_s)
                self.global_count += local
                self.lock_acquisitions += 1
                self.acquisitions_by_worker[worker] = (
                    self.acquisitions_by_worker.get(worker, 0) + 1
                )
            self._locals[worker] = 0

    def total(self) -> int:
        """global + locals; exact only at quiescence."""
        return self.global_count + sum(self._locals.values())


@dataclass
class ExperimentResult:
    workers: int
    domains: int
    increments: int
    delta: int
    samples_ms: np.ndarray
    counters: list[DomainCounter] = field(repr=False)
    worker_domain: dict[int, int] = field(repr=False)

    @property
    def issued(self) -> int:
        return self.workers * self.increments * self.delta

    def total_count(self) -> int:
        return sum(c.total() for c in self.counters)

    def lock_acquisitions(self) -> int:
        return sum(c.lock_acquisitions for c in self.counters)

    def acquisitions_of(self, worker: int) -> int:
        return self.counters[self.worker_domain[worker]].acquisitions_by_worker.get(worker, 0)


def contention_experiment(
    workers: int,
    domains: int,
    increments: int,
    batch: int,
    real_concurrency: bool,
    fold_cost_s: float = DEFAULT_FOLD_COST_S,
    delta: int = 1,
) -> ExperimentResult:
    """Run the counter loop across workers and report per-op latencies.

    domains=1 shares one counter across all workers; domains=k partitions
    workers round-robin over k isolated counters. real_concurrency=True runs
    actual threads and wall-clock timings; False runs a deterministic
    interleaved model on virtual time (one op per worker per round, folds
    queueing on the domain lock).
    """
    if workers < 1:
        raise SpecViolation("need at least one worker")
    if not 1 <= domains <= workers:
        raise SpecViolation("domain count must be in [1, workers]")
    if increments < 1:
        raise SpecViolation("need at least one increment per worker")

    worker_domain = {w: w % domains for w in range(workers)}

    if real_concurrency:
        counters = [DomainCounter(batch, fold_cost_s) for _ in range(domains)]
        lat = [np.empty(increments, dtype=np.float64) for _ in range(workers)]
        barrier = threading.Barrier(workers)

        def run(w: int) -> None:
            ctr = counters[worker_domain[w]]
            out = lat[w]
            barrier.wait()
            for i in range(increments):
                t0 = time.perf_counter_ns()
                ctr.add(w, delta)
                out[i] = (time.perf_counter_ns() - t0) / 1e6

        threads = [threading.Thread(target=run, args=(w,)) for w in range(workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        samples = np.concatenate(lat)
    else:
        counters = [DomainCounter(batch, 0.0) for _ in range(domains)]
        wt = [0.0] * workers  # per-worker virtual clock
        lock_free = [0.0] * domains
        samples = np.empty(workers * increments, dtype=np.float64)
        k = 0
        for _ in range(increments):
            for w in range(workers):
                d = worker_domain[w]
                t0 = wt[w]
                if counters[d].add(w, delta) == "flushed":
                    start = max(t0, lock_free[d])
                    end = start + fold_cost_s
                    lock_free[d] = end
                    op = (end - t0) + BASE_OP_S
                else:
                    op = BASE_OP_S
                wt[w] = t0 + op
                samples[k] = op * 1e3
                k += 1

    return ExperimentResult(
        workers=workers,
        domains=domains,
        increments=increments,
        delta=delta,
        samples_ms=samples,
        counters=counters,
        worker_domain=worker_domain,
    )
