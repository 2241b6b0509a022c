"""Tail-latency-driven CPU movement between a service and a batch instance.

At each window boundary the scheduler takes the window's latency samples,
computes the configured tail percentile, and moves at most one CPU: above the
upper threshold the batch instance donates a core to the service; below the
lower threshold the service returns one. Inside the band it holds, which
gives the loop its hysteresis. Floors convert moves into holds.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import IsoNodeError, SpecViolation
from .lifecycle import NodeManager
from .workloads.stats import percentile

MOVE_TO_SERVICE = "move-to-service"
MOVE_TO_BATCH = "move-to-batch"
HOLD = "hold"


@dataclass(frozen=True)
class SchedulerConfig:
    lt_ms: float
    ut_ms: float
    service: str
    batch: str
    window_s: float = 10.0
    percentile: float = 0.99
    min_cores_each: int = 1

    def __post_init__(self) -> None:
        if not 0 < self.lt_ms < self.ut_ms:
            raise SpecViolation("thresholds must satisfy 0 < lt < ut")
        if self.window_s <= 0:
            raise SpecViolation("window must be positive")
        if not 0 < self.percentile <= 1:
            raise SpecViolation("percentile must be in (0, 1]")
        if self.min_cores_each < 1:
            raise SpecViolation("core floor must be at least 1")
        if self.service == self.batch:
            raise SpecViolation("service and batch must differ")


@dataclass(frozen=True)
class Action:
    kind: str  # MOVE_TO_SERVICE | MOVE_TO_BATCH | HOLD
    reason: str | None = None  # holds: "in-band" | "no-data" | "floor" | "apply-failed"

    def __str__(self) -> str:
        return self.kind if self.reason is None else f"{self.kind}:{self.reason}"


@dataclass(frozen=True)
class Decision:
    """One history row: what was observed and what was done."""

    window_end: float
    p_tail_ms: float | None
    action: Action
    service_cores: int
    batch_cores: int


def decide_from_tail(
    config: SchedulerConfig, p_tail_ms: float | None, service_cores: int, batch_cores: int
) -> Action:
    """Pure threshold rule on an already-computed tail value."""
    if p_tail_ms is None:
        return Action(HOLD, "no-data")
    if p_tail_ms > config.ut_ms:
        if batch_cores <= config.min_cores_each:
            return Action(HOLD, "floor")
        return Action(MOVE_TO_SERVICE)
    if p_tail_ms < config.lt_ms:
        if service_cores <= config.min_cores_each:
            return Action(HOLD, "floor")
        return Action(MOVE_TO_BATCH)
    return Action(HOLD, "in-band")


def decide(
    config: SchedulerConfig,
    window_samples: Sequence[float],
    service_cores: int,
    batch_cores: int,
) -> Action:
    """Threshold rule on a closed window of latency samples (milliseconds)."""
    p = percentile(window_samples, config.percentile) if len(window_samples) else None
    return decide_from_tail(config, p, service_cores, batch_cores)


class WindowAccumulator:
    """Collects samples into tumbling windows aligned to the loop start."""

    def __init__(self, window_s: float, start: float = 0.0):
        self.window_s = window_s
        self.start = start
        self._buckets: dict[int, list[float]] = {}

    def observe(self, latency_ms: float, at: float) -> None:
        if latency_ms < 0:
            raise SpecViolation("negative latency sample (harness bug)")
        idx = int((at - self.start) / self.window_s)
        self._buckets.setdefault(idx, []).append(latency_ms)

    def close(self, idx: int) -> list[float]:
        return self._buckets.pop(idx, [])


def run_loop(
    config: SchedulerConfig,
    manager: NodeManager,
    feed: Iterable[tuple[float, Sequence[float]]],
    on_move=None,
) -> list[Decision]:
    """Drive the threshold rule over a feed of (window_end, samples) batches.

    Moves apply through the manager: the donor goes offline first, then the
    receiver onlines the freed core, charging both adjustment latencies. A
    lifecycle failure downgrades the decision to a hold. on_move, if given,
    is called after a successful move with the manager clock already charged.
    """
    history: list[Decision] = []
    for window_end, samples in feed:
        if manager.clock.now < window_end:
            manager.clock.advance_to(window_end)
        svc = len(manager.descriptors[config.service].grant.cores)
        bat = len(manager.descriptors[config.batch].grant.cores)
        p = percentile(samples, config.percentile) if len(samples) else None
        action = decide_from_tail(config, p, svc, bat)
        if action.kind == MOVE_TO_SERVICE:
            action = _apply(manager, config.batch, config.service, action)
        elif action.kind == MOVE_TO_BATCH:
            action = _apply(manager, config.service, config.batch, action)
        svc = len(manager.descriptors[config.service].grant.cores)
        bat = len(manager.descriptors[config.batch].grant.cores)
        if action.kind != HOLD and on_move is not None:
            on_move(action, svc, bat)
        history.append(Decision(window_end, p, action, svc, bat))
    return history


def _apply(manager: NodeManager, donor: str, receiver: str, action: Action) -> Action:
    try:
        manager.resize_cpu(donor, -1)
        manager.resize_cpu(receiver, +1)
    except IsoNodeError:
        return Action(HOLD, "apply-failed")
    return action
