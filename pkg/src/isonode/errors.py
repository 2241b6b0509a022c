"""Exception types shared across the emulator.

Statuses that are part of normal operation (a full ring, a passthrough
decision) are return values, not exceptions; everything here signals a
violated precondition or a peer that no longer exists.
"""

from __future__ import annotations


class IsoNodeError(Exception):
    """Base class for all emulator errors."""


class SpecViolation(IsoNodeError):
    """A node spec or request breaks a structural rule."""


class Unavailable(IsoNodeError):
    """A requested resource is not free. Names the first offender."""

    def __init__(self, resource: object):
        self.resource = resource
        super().__init__(f"resource not available: {resource!r}")


class NotOwner(IsoNodeError):
    """The acting instance does not own the named resource."""

    def __init__(self, resource: object, owner: object = None):
        self.resource = resource
        self.owner = owner
        super().__init__(f"not owner of {resource!r} (owner: {owner!r})")


class UnknownResource(IsoNodeError):
    """Resource id outside the node spec."""


class UnknownSubOS(IsoNodeError):
    """No instance with that id was ever created."""


class DeadSubOS(IsoNodeError):
    """The referenced instance is not live."""


class AlreadyDestroyed(IsoNodeError):
    """Destroy called twice on the same instance."""


class WouldEmptySubOS(IsoNodeError):
    """A resize would drop a live instance below its minimum holdings."""


class CommCoreInUse(IsoNodeError):
    """A resize tried to remove the communication core without reassigning it."""


class InvalidCommCore(IsoNodeError):
    """Attempt to publish a communication core the instance does not own."""


class DuplicateMac(IsoNodeError):
    """MAC address already registered."""


class SelfChannel(IsoNodeError):
    """An instance tried to open a channel to itself."""


class AlreadyOpen(IsoNodeError):
    """A ring pair between these two instances already exists."""


class PayloadSize(IsoNodeError):
    """Fabric payloads are exactly 64 bytes; anything else is rejected."""


class PeerGone(IsoNodeError):
    """The other end of a channel was destroyed or closed."""


class ChannelClosed(IsoNodeError):
    """I/O on a handle that was closed locally."""


class AlreadyClosed(IsoNodeError):
    """Close called twice on the same handle."""


class UnknownSegment(IsoNodeError):
    """No shared segment with that id."""


class AlreadyMapped(IsoNodeError):
    """Instance already maps the segment."""


class NotMapped(IsoNodeError):
    """Instance does not map the segment."""


class EmptySamples(IsoNodeError):
    """Percentile of an empty sample set is undefined."""


class BadRate(IsoNodeError):
    """Arrival rate must be positive."""


class NeverCompletes(IsoNodeError):
    """The core timeline never accumulates enough work for the batch job."""


class ScenarioError(IsoNodeError):
    """Scenario file failed validation; carries the offending field path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")
