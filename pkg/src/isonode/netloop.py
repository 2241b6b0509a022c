"""Transparent intra-node network loop.

Frames whose destination MAC is registered by a local instance are
intercepted and delivered over a per-destination SPSC ring with the same
notify-then-poll discipline as the message fabric; everything else passes
through to a recording sink standing in for the external network. Full rings
tail-drop at the interceptor and count the loss.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import SpecViolation
from .fabric import NapiGate, Ring
from .ledger import Ledger, RegisterMac, UnregisterMac

MAX_PAYLOAD = 1500
BROADCAST_MAC = "ff:ff:ff:ff:ff:ff"

_MAC_RE = re.compile(r"^([0-9a-fA-F]{2}[:-]){5}[0-9a-fA-F]{2}$")


def canonical_mac(text: str) -> str:
    """Normalize to lowercase colon-separated form."""
    if not _MAC_RE.match(text):
        raise SpecViolation(f"bad MAC address {text!r}")
    return text.lower().replace("-", ":")


@dataclass(frozen=True)
class Frame:
    dst_mac: str
    src_mac: str
    payload: bytes

    def __post_init__(self) -> None:
        object.__setattr__(self, "dst_mac", canonical_mac(self.dst_mac))
        object.__setattr__(self, "src_mac", canonical_mac(self.src_mac))


@dataclass(frozen=True)
class Route:
    """Pure routing decision for one frame."""

    kind: str  # "loop" | "passthrough" | "drop"
    dst: str | None = None
    reason: str | None = None

    @classmethod
    def loop(cls, dst: str) -> "Route":
        return cls("loop", dst=dst)

    @classmethod
    def passthrough(cls) -> "Route":
        return cls("passthrough")

    @classmethod
    def drop(cls, reason: str) -> "Route":
        return cls("drop", reason=reason)


@dataclass(frozen=True)
class InjectResult:
    kind: str  # "delivered" | "passthrough" | "ring-full" | "dropped"
    dst: str | None = None
    delivered: int = 0  # fan-out count for broadcast
    reason: str | None = None


class NetLoop:
    """Interceptor plus per-destination rings for one node."""

    def __init__(self, ledger: Ledger, capacity: int = 256, budget: int = 64):
        self.ledger = ledger
        self.capacity = capacity
        self.budget = budget
        self._rings: dict[str, Ring] = {}
        self._gates: dict[str, NapiGate] = {}
        self.passthrough_sink: list[Frame] = []
        self.ring_full: dict[str, int] = {}
        self.drops: dict[str, int] = {}
        self.trace: list[tuple[float, str, str, str]] = []

    # -- MAC registration ------------------------------------------------------

    def register_mac(self, subos: str, mac: str) -> None:
        self.ledger.update_shared_state(RegisterMac(subos, canonical_mac(mac)))
        self._ensure(subos)

    def unregister_mac(self, subos: str, mac: str) -> None:
        self.ledger.update_shared_state(UnregisterMac(subos, canonical_mac(mac)))

    def _ensure(self, subos: str) -> None:
        if subos not in self._rings:
            self._rings[subos] = Ring(self.capacity)
            self._gates[subos] = NapiGate()

    def detach(self, subos: str) -> None:
        """Invalidation hook: the ledger drops the MACs, we drop the ring."""
        self._rings.pop(subos, None)
        self._gates.pop(subos, None)

    # -- routing -----------------------------------------------------------------

    def route(self, frame: Frame) -> Route:
        """Decide without side effects where one frame would go."""
        if len(frame.payload) > MAX_PAYLOAD:
            return Route.drop("oversize")
        macs, _, _ = self._snapshot()
        owner = macs.get(frame.dst_mac)
        if owner is None:
            return Route.passthrough()
        if owner not in self._rings:
            return Route.drop("peer-gone")
        return Route.loop(owner)

    def _snapshot(self) -> tuple[dict[str, str], dict[str, int], int]:
        comm, macs, version = self.ledger.shared_snapshot()
        return macs, comm, version

    def inject(self, frame: Frame, at: float = 0.0) -> InjectResult:
        """Route one frame and enqueue it if it loops locally."""
        if len(frame.payload) > MAX_PAYLOAD:
            self._drop("oversize")
            self._trace(at, frame, "drop:oversize")
            return InjectResult("dropped", reason="oversize")
        macs, _, _ = self._snapshot()
        if frame.dst_mac == BROADCAST_MAC:
            sender = macs.get(frame.src_mac)
            targets = sorted({owner for owner in macs.values() if owner != sender})
            count = 0
            for dst in targets:
                if self._enqueue(dst, frame):
                    count += 1
            self._trace(at, frame, f"broadcast:{count}")
            return InjectResult("delivered", delivered=count)
        owner = macs.get(frame.dst_mac)
        if owner is None:
            self.passthrough_sink.append(frame)
            self._trace(at, frame, "passthrough")
            return InjectResult("passthrough")
        if owner not in self._rings:
            self._drop("peer-gone")
            self._trace(at, frame, "drop:peer-gone")
            return InjectResult("dropped", reason="peer-gone")
        if not self._enqueue(owner, frame):
            self._trace(at, frame, f"ring-full:{owner}")
            return InjectResult("ring-full", dst=owner)
        self._trace(at, frame, f"loop:{owner}")
        return InjectResult("delivered", dst=owner, delivered=1)

    def _enqueue(self, dst: str, frame: Frame) -> bool:
        ring = self._rings.get(dst)
        if ring is None:
            self._drop("peer-gone")
            return False
        if not ring.try_push(frame):
            self.ring_full[dst] = self.ring_full.get(dst, 0) + 1
            return False
        self._gates[dst].ring_doorbell()
        return True

    def _drop(self, reason: str) -> None:
        self.drops[reason] = self.drops.get(reason, 0) + 1

    def _trace(self, at: float, frame: Frame, decision: str) -> None:
        self.trace.append((at, frame.src_mac, frame.dst_mac, decision))

    # -- receive ------------------------------------------------------------------

    def recv_batch(self, subos: str, budget: int | None = None) -> list[Frame]:
        """Drain up to budget frames FIFO, with fabric-style mode transitions."""
        self._ensure(subos)
        ring = self._rings[subos]
        gate = self._gates[subos]
        gate.begin_poll()
        limit = budget if budget is not None else self.budget
        out: list[Frame] = []
        while len(out) < limit:
            frame = ring.try_pop()
            if frame is None:
                break
            out.append(frame)  # type: ignore[arg-type]
        if len(ring) == 0:
            gate.end_poll_empty()
            if len(ring) > 0:
                gate.ring_doorbell()
        return out

    def doorbell_count(self, subos: str) -> int:
        gate = self._gates.get(subos)
        return gate.doorbells if gate is not None else 0

    def mode(self, subos: str):
        self._ensure(subos)
        return self._gates[subos].mode

    def trace_rows(self) -> list[tuple[str, str, str, str]]:
        """Formatted rows (time, src_mac, dst_mac, decision) for CSV export."""
        return [(f"{t:.6f}", s, d, dec) for t, s, d, dec in self.trace]
