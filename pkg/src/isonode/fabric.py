"""Cache-line message fabric between instances.

Messages are exactly 64 bytes and travel over per-pair single-producer,
single-consumer rings. Receivers follow a notify-then-poll discipline: the
first send to an idle endpoint rings its doorbell, after which the consumer
polls rings round-robin with a drain budget until they are empty again.
Sends never block; a full ring reports backpressure to the caller.

The SPSC rings rely on one writer per counter: the producer only advances
tail, the consumer only advances head, and both counters grow monotonically.
Event-based wait helpers let real producer/consumer threads park instead of
spinning; they are advisory and do not change the non-blocking semantics.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from enum import Enum

from .errors import (
    AlreadyOpen,
    DeadSubOS,
    PayloadSize,
    PeerGone,
    SelfChannel,
    SpecViolation,
)

MSG_BYTES = 64
DEFAULT_CAPACITY = 256
DEFAULT_BUDGET = 64


@dataclass(frozen=True)
class CacheLineMsg:
    src: str
    dst: str
    seq: int
    payload: bytes


class Ring:
    """Bounded SPSC ring. try_push/try_pop are the only hot-path operations."""

    __slots__ = ("capacity", "_mask", "_slots", "_head", "_tail", "_space", "next_seq")

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 1 or capacity & (capacity - 1):
            raise SpecViolation(f"ring capacity must be a power of two, got {capacity}")
        self.capacity = capacity
        self._mask = capacity - 1
        self._slots: list[object | None] = [None] * capacity
        self._head = 0  # consumer-owned
        self._tail = 0  # producer-owned
        self._space = threading.Event()
        self.next_seq = 0  # producer-owned

    def __len__(self) -> int:
        return self._tail - self._head

    def try_push(self, item: object) -> bool:
        if self._tail - self._head >= self.capacity:
            return False
        self._slots[self._tail & self._mask] = item
        self._tail += 1
        return True

    def try_pop(self) -> object | None:
        if self._head == self._tail:
            return None
        i = self._head & self._mask
        item = self._slots[i]
        self._slots[i] = None
        self._head += 1
        return item

    def wait_space(self, timeout: float | None = None) -> bool:
        """Producer-side park until the consumer signals it made room."""
        self._space.clear()
        if self._tail - self._head < self.capacity:
            return True
        return self._space.wait(timeout)

    def signal_space(self) -> None:
        self._space.set()


class Mode(Enum):
    IDLE = "idle"
    NOTIFIED = "notified"
    POLLING = "polling"


class NapiGate:
    """Doorbell/poll state machine shared by fabric endpoints and the net loop."""

    __slots__ = ("mode", "doorbells", "to_empty", "_evt", "_lock")

    def __init__(self) -> None:
        self.mode = Mode.IDLE
        self.doorbells = 0
        self.to_empty = 0  # completed drain-to-empty cycles
        self._evt = threading.Event()
        self._lock = threading.Lock()

    def ring_doorbell(self) -> bool:
        """Idle -> Notified; returns True if this call fired the doorbell."""
        if self.mode is Mode.IDLE:
            with self._lock:
                if self.mode is Mode.IDLE:
                    self.mode = Mode.NOTIFIED
                    self.doorbells += 1
                    self._evt.set()
                    return True
        return False

    def begin_poll(self) -> None:
        with self._lock:
            if self.mode is not Mode.POLLING:
                self.mode = Mode.POLLING

    def end_poll_empty(self) -> None:
        with self._lock:
            self.mode = Mode.IDLE
            self.to_empty += 1
            self._evt.clear()

    def wait_notified(self, timeout: float | None = None) -> bool:
        return self._evt.wait(timeout)


class Endpoint:
    """Receive side of one instance: inbound rings plus the NAPI gate."""

    def __init__(self, owner: str):
        self.owner = owner
        self.gate = NapiGate()
        self._rings: dict[str, Ring] = {}
        self._order: list[str] = []
        self._rr = 0
        self.drained = 0

    @property
    def mode(self) -> Mode:
        return self.gate.mode

    def add_ring(self, src: str, ring: Ring) -> None:
        self._rings[src] = ring
        self._order.append(src)

    def remove_ring(self, src: str) -> None:
        if src in self._rings:
            del self._rings[src]
            self._order.remove(src)
            self._rr = 0

    def pending(self) -> int:
        return sum(len(r) for r in self._rings.values())

    def drain(self, budget: int = DEFAULT_BUDGET) -> list[CacheLineMsg]:
        """Dequeue up to budget messages, one ring at a time in cyclic order.

        Leaves the gate Polling while messages remain so producers stop
        doorbelling; only a fully drained endpoint goes back to Idle.
        """
        self.gate.begin_poll()
        out: list[CacheLineMsg] = []
        n = len(self._order)
        touched: set[str] = set()
        if n:
            idx = self._rr
            misses = 0
            while len(out) < budget and misses < n:
                src = self._order[idx % n]
                idx += 1
                msg = self._rings[src].try_pop()
                if msg is None:
                    misses += 1
                else:
                    misses = 0
                    out.append(msg)  # type: ignore[arg-type]
                    touched.add(src)
            self._rr = idx % n
        for src in touched:
            ring = self._rings.get(src)
            if ring is not None:
                ring.signal_space()
        if self.pending() == 0:
            self.gate.end_poll_empty()
            # A producer may have pushed between the emptiness check and the
            # Idle transition while seeing mode Polling; re-doorbell ourselves
            # so that wakeup is never lost.
            if self.pending() > 0:
                self.gate.ring_doorbell()
        self.drained += len(out)
        return out


@dataclass(frozen=True)
class SendResult:
    accepted: bool
    seq: int | None = None


class Delivery(Enum):
    SENT = "sent"
    FULL = "full"
    PEER_GONE = "peer-gone"


class Fabric:
    """Topology of endpoints and per-pair rings for one node.

    Topology changes (attach/detach/open) are serialized by the supervisor
    context; only send and drain may run concurrently, one producer and one
    consumer per ring.
    """

    def __init__(self, default_capacity: int = DEFAULT_CAPACITY, drain_budget: int = DEFAULT_BUDGET):
        self.default_capacity = default_capacity
        self.drain_budget = drain_budget
        self._endpoints: dict[str, Endpoint] = {}
        self._rings: dict[tuple[str, str], Ring] = {}
        self._dead: set[str] = set()
        self._sent: dict[str, int] = {}
        self._full: dict[str, int] = {}

    # -- membership -------------------------------------------------------

    def attach(self, subos: str) -> None:
        """Register a live instance; idempotent."""
        if subos in self._endpoints:
            return
        self._dead.discard(subos)
        self._endpoints[subos] = Endpoint(subos)
        self._sent.setdefault(subos, 0)
        self._full.setdefault(subos, 0)

    def detach(self, subos: str) -> None:
        """Invalidate a destroyed instance: drop its endpoint and all rings."""
        self._endpoints.pop(subos, None)
        self._dead.add(subos)
        for pair in [p for p in self._rings if subos in p]:
            src, dst = pair
            del self._rings[pair]
            ep = self._endpoints.get(dst)
            if ep is not None:
                ep.remove_ring(src)

    def live(self) -> frozenset[str]:
        return frozenset(self._endpoints)

    def endpoint(self, subos: str) -> Endpoint:
        try:
            return self._endpoints[subos]
        except KeyError:
            raise DeadSubOS(subos) from None

    def _require_live(self, subos: str) -> None:
        if subos not in self._endpoints:
            if subos in self._dead:
                raise PeerGone(subos)
            raise DeadSubOS(subos)

    # -- rings -------------------------------------------------------------

    def open_pair(self, a: str, b: str, capacity: int | None = None) -> tuple[Ring, Ring]:
        """Create the a->b and b->a rings explicitly."""
        if a == b:
            raise SelfChannel(a)
        for s in (a, b):
            if s not in self._endpoints:
                raise DeadSubOS(s)
        if (a, b) in self._rings or (b, a) in self._rings:
            raise AlreadyOpen(f"{a}<->{b}")
        cap = capacity if capacity is not None else self.default_capacity
        r_ab, r_ba = Ring(cap), Ring(cap)
        self._rings[(a, b)] = r_ab
        self._rings[(b, a)] = r_ba
        self._endpoints[b].add_ring(a, r_ab)
        self._endpoints[a].add_ring(b, r_ba)
        return r_ab, r_ba

    def ring(self, src: str, dst: str) -> Ring:
        """The src->dst ring, created on demand along with its reverse."""
        try:
            return self._rings[(src, dst)]
        except KeyError:
            if src == dst:
                raise SelfChannel(src) from None
            self._require_live(src)
            if dst not in self._endpoints:
                if dst in self._dead:
                    raise PeerGone(dst) from None
                raise DeadSubOS(dst) from None
            self.open_pair(src, dst)
            return self._rings[(src, dst)]

    # -- data path -----------------------------------------------------------

    def send(self, src: str, dst: str, payload: bytes) -> SendResult:
        """Non-blocking enqueue of one 64-byte message on the src->dst ring."""
        if len(payload) != MSG_BYTES:
            raise PayloadSize(f"payload must be {MSG_BYTES} bytes, got {len(payload)}")
        if dst in self._dead:
            raise PeerGone(dst)
        ring = self.ring(src, dst)
        msg = CacheLineMsg(src, dst, ring.next_seq, payload)
        if not ring.try_push(msg):
            self._full[src] = self._full.get(src, 0) + 1
            return SendResult(False)
        ring.next_seq += 1
        self._sent[src] = self._sent.get(src, 0) + 1
        self._endpoints[dst].gate.ring_doorbell()
        return SendResult(True, msg.seq)

    def multicast(self, src: str, group: set[str] | frozenset[str], payload: bytes) -> dict[str, Delivery]:
        """Independent send to each group member; statuses, never exceptions."""
        if not group:
            raise SpecViolation("multicast group is empty")
        results: dict[str, Delivery] = {}
        for dst in sorted(group):
            try:
                r = self.send(src, dst, payload)
            except PeerGone:
                results[dst] = Delivery.PEER_GONE
            else:
                results[dst] = Delivery.SENT if r.accepted else Delivery.FULL
        return results

    def broadcast(self, src: str, payload: bytes) -> dict[str, Delivery]:
        """Multicast to every live instance except the sender."""
        self._require_live(src)
        group = set(self._endpoints) - {src}
        if not group:
            return {}
        return self.multicast(src, group, payload)

    def drain(self, subos: str, budget: int | None = None) -> list[CacheLineMsg]:
        ep = self.endpoint(subos)
        return ep.drain(budget if budget is not None else self.drain_budget)

    def doorbell_count(self, subos: str) -> int:
        return self.endpoint(subos).gate.doorbells

    def wait_notified(self, subos: str, timeout: float | None = None) -> bool:
        """Consumer-side park until a doorbell fires."""
        return self.endpoint(subos).gate.wait_notified(timeout)

    # -- observability ----------------------------------------------------------

    def stats(self) -> dict[str, dict[str, int]]:
        """Per-instance counters for the CLI summary."""
        out: dict[str, dict[str, int]] = {}
        for sid in sorted(set(self._sent) | set(self._endpoints)):
            ep = self._endpoints.get(sid)
            out[sid] = {
                "sent": self._sent.get(sid, 0),
                "drained": ep.drained if ep is not None else 0,
                "doorbells": ep.gate.doorbells if ep is not None else 0,
                "full_events": self._full.get(sid, 0),
            }
        return out
