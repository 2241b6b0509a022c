"""Socket-like byte channels and shared segments between instances.

Channels are duplex byte streams with a bounded buffer per direction; writes
are non-blocking and may be short, reads drain FIFO and return empty when no
data is queued. Framing is the caller's job. After a peer closes or is
destroyed, the survivor may drain whatever was already buffered; the first
I/O past that residue reports the lost peer.

Shared segments are a single backing store mapped by multiple instances with
no synchronization of their own; scenario code serializes access through the
virtual clock, which keeps runs deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    AlreadyClosed,
    AlreadyMapped,
    ChannelClosed,
    DeadSubOS,
    NotMapped,
    PeerGone,
    SelfChannel,
    SpecViolation,
    UnknownSegment,
)

DEFAULT_CHANNEL_BYTES = 64 * 1024


class _Channel:
    """Shared guts of one duplex channel; index 0/1 are the two directions."""

    __slots__ = ("id", "ends", "capacity", "bufs", "closed", "dead", "written", "read")

    def __init__(self, cid: int, a: str, b: str, capacity: int):
        self.id = cid
        self.ends = (a, b)
        self.capacity = capacity
        self.bufs = (bytearray(), bytearray())  # [0]: a->b, [1]: b->a
        self.closed = [False, False]
        self.dead = [False, False]
        self.written = [0, 0]
        self.read = [0, 0]


class HandleState:
    OPEN = "open"
    CLOSED = "closed"
    PEER_GONE = "peer-gone"


class RfHandle:
    """One end of a channel."""

    __slots__ = ("_ch", "_side")

    def __init__(self, ch: _Channel, side: int):
        self._ch = ch
        self._side = side

    @property
    def local(self) -> str:
        return self._ch.ends[self._side]

    @property
    def peer(self) -> str:
        return self._ch.ends[1 - self._side]

    @property
    def state(self) -> str:
        if self._ch.closed[self._side] or self._ch.dead[self._side]:
            return HandleState.CLOSED
        if self._ch.closed[1 - self._side] or self._ch.dead[1 - self._side]:
            return HandleState.PEER_GONE
        return HandleState.OPEN

    def __repr__(self) -> str:
        return f"RfHandle(ch{self._ch.id}@{self.local}, {self.state})"


def rf_write(handle: RfHandle, data: bytes) -> int:
    """Append up to the free buffer space; returns bytes accepted."""
    ch, side = handle._ch, handle._side
    if ch.closed[side] or ch.dead[side]:
        raise ChannelClosed(handle.local)
    if ch.closed[1 - side] or ch.dead[1 - side]:
        raise PeerGone(handle.peer)
    buf = ch.bufs[side]
    take = min(ch.capacity - len(buf), len(data))
    if take:
        buf += data[:take]
        ch.written[side] += take
    return take

def rf_read(handle: RfHandle, max_bytes: int) -> bytes:
    """FIFO read of up to max_bytes; empty result means no data queued."""
    ch, side = handle._ch, handle._side
    if ch.closed[side] or ch.dead[side]:
        raise ChannelClosed(handle.local)
    buf = ch.bufs[1 - side]
    if buf:
        take = min(max_bytes, len(buf))
        out = bytes(buf[:take])
        del buf[:take]
        ch.read[side] += take
        return out
    if ch.closed[1 - side] or ch.dead[1 - side]:
        raise PeerGone(handle.peer)
    return b""

def rf_close(handle: RfHandle) -> None:
    ch, side = handle._ch, handle._side
    if ch.closed[side]:
        raise AlreadyClosed(handle.local)
    ch.closed[side] = True


@dataclass
class SharedSegment:
    id: int
    size: int
    store: bytearray
    mappers: set[str] = field(default_factory=set)


class SegmentView:
    """Read/write access to one mapped segment; dies with the mapping."""

    __slots__ = ("_seg", "_subos")

    def __init__(self, seg: SharedSegment, subos: str):
        self._seg = seg
        self._subos = subos

    def _check(self, offset: int, length: int) -> None:
        if self._subos not in self._seg.mappers:
            raise NotMapped(f"{self._subos} does not map segment {self._seg.id}")
        if offset < 0 or offset + length > self._seg.size:
            raise SpecViolation(
                f"range [{offset}, {offset + length}) outside segment of {self._seg.size} bytes"
            )

    def write(self, offset: int, data: bytes) -> None:
        self._check(offset, len(data))
        self._seg.store[offset : offset + len(data)] = data

    def read(self, offset: int, length: int) -> bytes:
        self._check(offset, length)
        return bytes(self._seg.store[offset : offset + length])


class CommHub:
    """Registry of live instances, their channels, and shared segments."""

    def __init__(self) -> None:
        self._live: set[str] = set()
        self._channels: list[_Channel] = []
        self._segments: dict[int, SharedSegment] = {}
        self._next_ch = 0
        self._next_seg = 0

    def attach(self, subos: str) -> None:
        self._live.add(subos)

    def detach(self, subos: str) -> None:
        """Invalidate a destroyed instance's handles and mappings."""
        self._live.discard(subos)
        for ch in self._channels:
            for side in (0, 1):
                if ch.ends[side] == subos:
                    ch.dead[side] = True
        for seg in self._segments.values():
            seg.mappers.discard(subos)

    def rf_open(
        self, a: str, b: str, byte_capacity: int = DEFAULT_CHANNEL_BYTES
    ) -> tuple[RfHandle, RfHandle]:
        """Open a duplex channel; independent opens give independent channels."""
        if a == b:
            raise SelfChannel(a)
        for s in (a, b):
            if s not in self._live:
                raise DeadSubOS(s)
        if byte_capacity < 1:
            raise SpecViolation("channel capacity must be positive")
        ch = _Channel(self._next_ch, a, b, byte_capacity)
        self._next_ch += 1
        self._channels.append(ch)
        return RfHandle(ch, 0), RfHandle(ch, 1)

    # -- shared segments ----------------------------------------------------

    def create_segment(self, size: int) -> int:
        """Supervisor-side allocation of a fixed-size shared byte store."""
        if size < 1:
            raise SpecViolation("segment size must be positive")
        seg = SharedSegment(self._next_seg, size, bytearray(size))
        self._next_seg += 1
        self._segments[seg.id] = seg
        return seg.id

    def rf_map(self, subos: str, segment_id: int) -> SegmentView:
        if subos not in self._live:
            raise DeadSubOS(subos)
        try:
            seg = self._segments[segment_id]
        except KeyError:
            raise UnknownSegment(segment_id) from None
        if subos in seg.mappers:
            raise AlreadyMapped(f"{subos} already maps segment {segment_id}")
        seg.mappers.add(subos)
        return SegmentView(seg, subos)

    def rf_unmap(self, subos: str, segment_id: int) -> None:
        try:
            seg = self._segments[segment_id]
        except KeyError:
            raise UnknownSegment(segment_id) from None
        if subos not in seg.mappers:
            raise NotMapped(f"{subos} does not map segment {segment_id}")
        seg.mappers.discard(subos)

    def stats(self) -> list[dict[str, object]]:
        """Per-channel byte counters for the CLI summary."""
        return [
            {
                "channel": ch.id,
                "ends": ch.ends,
                "written": tuple(ch.written),
                "read": tuple(ch.read),
            }
            for ch in self._channels
        ]
