"""Virtual clock: plain float seconds, advanced only by the code that owns it."""

from __future__ import annotations

from .errors import SpecViolation


class VirtualClock:
    """Monotone virtual time in seconds."""

    __slots__ = ("_now",)

    def __init__(self, start: float = 0.0):
        if start < 0.0:
            raise SpecViolation("clock cannot start negative")
        self._now = float(start)

    @property
    def now(self) -> float:
        return self._now

    def advance(self, dt: float) -> float:
        """Move time forward by dt seconds and return the new time."""
        if dt < 0.0:
            raise SpecViolation(f"clock cannot go backwards (dt={dt})")
        self._now += dt
        return self._now

    def advance_to(self, t: float) -> float:
        """Move time forward to t; t must not be in the past."""
        if t < self._now:
            raise SpecViolation(f"clock cannot go backwards (now={self._now}, t={t})")
        self._now = float(t)
        return self._now

    def __repr__(self) -> str:
        return f"VirtualClock(now={self._now:.6f})"
