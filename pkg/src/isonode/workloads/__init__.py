"""Deterministic workload harness: generators, queueing sim, stats, counters."""

from .batchjob import simulate_batch
from .contention import DomainCounter, contention_experiment
from .generate import ArrivalSchedule, gen_poisson, gen_uniform
from .queueing import ContentionCurve, QueueSim, ServiceModel, ServiceTime, simulate_service
from .stats import LatencyHistogram, percentile

__all__ = [
    "ArrivalSchedule",
    "ContentionCurve",
    "DomainCounter",
    "LatencyHistogram",
    "QueueSim",
    "ServiceModel",
    "ServiceTime",
    "contention_experiment",
    "gen_poisson",
    "gen_uniform",
    "percentile",
    "simulate_batch",
    "simulate_service",
]
