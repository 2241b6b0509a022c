"""isonode: a desk-scale emulator of a partitioned multi-OS node.

One supervisor plus elastic instances share a machine by splitting it:
every core, memory region, and device has exactly one owner, state
sharing happens only through a small versioned table, and messages move
over cache-line rings with interrupt-style doorbells. Workload models
(queueing, batch integral, counter contention) and a tail-latency core
scheduler sit on top so resource decisions can be replayed deterministically.
"""

from __future__ import annotations

from .clock import VirtualClock
from .errors import IsoNodeError, ScenarioError, SpecViolation
from .fabric import Fabric, Ring
from .ledger import Ledger, NodeSpec, ResourceGrant
from .lifecycle import LatencyModel, NodeManager, new_node
from .sched import Action, Decision, SchedulerConfig, decide, decide_from_tail, run_loop

__version__ = "0.1.0"

__all__ = [
    "Action",
    "Decision",
    "Fabric",
    "IsoNodeError",
    "LatencyModel",
    "Ledger",
    "NodeManager",
    "NodeSpec",
    "ResourceGrant",
    "Ring",
    "ScenarioError",
    "SchedulerConfig",
    "SpecViolation",
    "VirtualClock",
    "decide",
    "decide_from_tail",
    "new_node",
    "run_loop",
    "__version__",
]
