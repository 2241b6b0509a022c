"""Authoritative record of node resources and their exclusive owners.

Every core, memory region, and device has exactly one owner at any instant:
the supervisor, one instance, or the free pool. Mutations are all-or-nothing;
a failed call leaves the ledger untouched. A small globally shared table
(communication cores and MAC addresses) is versioned so readers can take
consistent snapshots, and three protected resource classes are guarded by
independent exclusive locks.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Iterable, TypeVar

from .errors import (
    DeadSubOS,
    DuplicateMac,
    InvalidCommCore,
    NotOwner,
    SpecViolation,
    Unavailable,
    UnknownResource,
)

MiB = 1 << 20
GiB = 1 << 30
REGION_BYTES_DEFAULT = 128 * MiB

CORE = "core"
REGION = "region"
DEVICE = "device"

T = TypeVar("T")


@dataclass(frozen=True)
class Owner:
    """Tagged owner reference: free pool, supervisor, or one instance."""

    kind: str  # "free" | "supervisor" | "subos"
    subos: str | None = None

    def __str__(self) -> str:
        return self.kind if self.subos is None else f"{self.kind}:{self.subos}"


FREE = Owner("free")
SUPERVISOR = Owner("supervisor")


def subos_owner(subos_id: str) -> Owner:
    return Owner("subos", subos_id)


def parse_owner(text: str) -> Owner:
    kind, _, rest = text.partition(":")
    return Owner(kind, rest or None)


@dataclass(frozen=True)
class NodeSpec:
    """Physical shape of the node: cores, memory, region granularity, devices."""

    total_cores: int
    total_memory: int
    region_bytes: int = REGION_BYTES_DEFAULT
    devices: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.total_cores < 2:
            raise SpecViolation("node needs at least 2 cores (supervisor + 1)")
        if self.region_bytes <= 0:
            raise SpecViolation("region granularity must be positive")
        if self.total_memory % self.region_bytes != 0:
            raise SpecViolation(
                f"region granularity {self.region_bytes} does not divide "
                f"total memory {self.total_memory}"
            )
        if len(set(self.devices)) != len(self.devices):
            raise SpecViolation("duplicate device ids")

    @property
    def total_regions(self) -> int:
        return self.total_memory // self.region_bytes

    def regions_for(self, nbytes: int) -> int:
        """Whole regions needed to cover nbytes (rounds up)."""
        if nbytes < 0:
            raise SpecViolation("negative byte count")
        return -(-nbytes // self.region_bytes)


@dataclass(frozen=True)
class ResourceGrant:
    """Exact set of resources transferred to one instance."""

    cores: frozenset[int] = frozenset()
    regions: frozenset[int] = frozenset()
    devices: frozenset[str] = frozenset()

    def is_empty(self) -> bool:
        return not (self.cores or self.regions or self.devices)


@dataclass(frozen=True)
class BorrowRecord:
    """Accounting overlay: lending never moves ownership."""

    lender: str
    borrower: str
    resource: tuple[str, int | str]
    registered_at: float


class ProtectedClass(Enum):
    """Resource classes that only one context may update at a time."""

    LOW_MEMORY = "low-memory"
    IO_APIC = "io-apic"
    PCI_CONFIG = "pci-config"


@dataclass
class SharedStateTable:
    """The only cross-instance state: comm cores and MAC ownership, versioned."""

    comm_core: dict[str, int] = field(default_factory=dict)
    macs: dict[str, str] = field(default_factory=dict)  # mac -> subos id
    version: int = 0


# Shared-state mutations. Each successful application bumps the version by 1.


@dataclass(frozen=True)
class SetCommCore:
    subos: str
    core: int


@dataclass(frozen=True)
class RegisterMac:
    subos: str
    mac: str


@dataclass(frozen=True)
class UnregisterMac:
    subos: str
    mac: str


@dataclass(frozen=True)
class RemoveSubOS:
    """Drops an instance's comm-core and MAC entries in one mutation."""

    subos: str


Mutation = SetCommCore | RegisterMac | UnregisterMac | RemoveSubOS


class Ledger:
    """Single-writer resource ledger for one node."""

    def __init__(self, spec: NodeSpec, supervisor_cores: int, supervisor_memory: int):
        if supervisor_cores < 1:
            raise SpecViolation("supervisor needs at least one core")
        if supervisor_memory < spec.region_bytes:
            raise SpecViolation("supervisor needs at least one memory region")
        sup_regions = spec.regions_for(supervisor_memory)
        if supervisor_cores > spec.total_cores - 1:
            raise SpecViolation("supervisor cores leave no allocatable core")
        if sup_regions > spec.total_regions:
            raise SpecViolation("supervisor memory exceeds node total")

        self.spec = spec
        self._core_owner: list[Owner] = [FREE] * spec.total_cores
        self._region_owner: list[Owner] = [FREE] * spec.total_regions
        self._device_owner: dict[str, Owner] = {d: FREE for d in spec.devices}
        for c in range(supervisor_cores):
            self._core_owner[c] = SUPERVISOR
        for r in range(sup_regions):
            self._region_owner[r] = SUPERVISOR
        self._live: set[str] = set()
        self.shared = SharedStateTable()
        self.borrows: list[BorrowRecord] = []
        self._locks = {cls: threading.Lock() for cls in ProtectedClass}

    # -- queries ------------------------------------------------------------

    def owner_of(self, kind: str, ident: int | str) -> Owner:
        if kind == CORE:
            if not isinstance(ident, int) or not 0 <= ident < self.spec.total_cores:
                raise UnknownResource(f"core {ident!r}")
            return self._core_owner[ident]
        if kind == REGION:
            if not isinstance(ident, int) or not 0 <= ident < self.spec.total_regions:
                raise UnknownResource(f"region {ident!r}")
            return self._region_owner[ident]
        if kind == DEVICE:
            try:
                return self._device_owner[ident]  # type: ignore[index]
            except KeyError:
                raise UnknownResource(f"device {ident!r}") from None
        raise UnknownResource(f"resource kind {kind!r}")

    def is_live(self, subos: str) -> bool:
        return subos in self._live

    def live_subos(self) -> frozenset[str]:
        return frozenset(self._live)

    def cores_of(self, owner: Owner) -> list[int]:
        return [i for i, o in enumerate(self._core_owner) if o == owner]

    def regions_of(self, owner: Owner) -> list[int]:
        return [i for i, o in enumerate(self._region_owner) if o == owner]

    def devices_of(self, owner: Owner) -> list[str]:
        return [d for d, o in self._device_owner.items() if o == owner]

    def grant_of(self, subos: str) -> ResourceGrant:
        own = subos_owner(subos)
        return ResourceGrant(
            cores=frozenset(self.cores_of(own)),
            regions=frozenset(self.regions_of(own)),
            devices=frozenset(self.devices_of(own)),
        )

    def free_core_count(self) -> int:
        return sum(1 for o in self._core_owner if o == FREE)

    def free_region_count(self) -> int:
        return sum(1 for o in self._region_owner if o == FREE)

    # -- ownership transfer ---------------------------------------------------

    def allocate(
        self,
        subos: str,
        cores: int | Iterable[int] = 0,
        regions: int | Iterable[int] = 0,
        devices: Iterable[str] = (),
    ) -> ResourceGrant:
        """Move the requested resources Free -> instance, all or nothing.

        cores/regions accept either a count (lowest-id free resources are
        picked) or an explicit id collection. The first non-free resource is
        named in the Unavailable error and nothing is transferred.
        """
        want_cores = self._pick(self._core_owner, cores, CORE)
        want_regions = self._pick(self._region_owner, regions, REGION)
        want_devices = list(devices)
        for d in want_devices:
            if self.owner_of(DEVICE, d) != FREE:
                raise Unavailable((DEVICE, d))
        # All checks passed; apply.
        own = subos_owner(subos)
        for c in want_cores:
            self._core_owner[c] = own
        for r in want_regions:
            self._region_owner[r] = own
        for d in want_devices:
            self._device_owner[d] = own
        self._live.add(subos)
        return ResourceGrant(
            cores=frozenset(want_cores),
            regions=frozenset(want_regions),
            devices=frozenset(want_devices),
        )

    def _pick(
        self, owners: list[Owner], request: int | Iterable[int], kind: str
    ) -> list[int]:
        if isinstance(request, int):
            if request < 0:
                raise SpecViolation(f"negative {kind} count")
            free = [i for i, o in enumerate(owners) if o == FREE]
            if len(free) < request:
                raise Unavailable((kind, f"{request} requested, {len(free)} free"))
            return free[:request]
        ids = list(request)
        for i in ids:
            if not 0 <= i < len(owners):
                raise UnknownResource(f"{kind} {i!r}")
            if owners[i] != FREE:
                raise Unavailable((kind, i))
        if len(set(ids)) != len(ids):
            raise SpecViolation(f"duplicate {kind} ids in request")
        return ids

    def release(self, subos: str, grant: ResourceGrant) -> None:
        """Return every resource in grant to the free pool; no partial release."""
        own = subos_owner(subos)
        for c in grant.cores:
            if self.owner_of(CORE, c) != own:
                raise NotOwner((CORE, c), self._core_owner[c])
        for r in grant.regions:
            if self.owner_of(REGION, r) != own:
                raise NotOwner((REGION, r), self._region_owner[r])
        for d in grant.devices:
            if self.owner_of(DEVICE, d) != own:
                raise NotOwner((DEVICE, d), self._device_owner[d])
        for c in grant.cores:
            self._core_owner[c] = FREE
        for r in grant.regions:
            self._region_owner[r] = FREE
        for d in grant.devices:
            self._device_owner[d] = FREE

    def retire(self, subos: str) -> None:
        """Mark an instance dead. Its grant must already be released."""
        self._live.discard(subos)

    # -- borrowing ------------------------------------------------------------

    def register_borrow(
        self, lender: str, borrower: str, resource: tuple[str, int | str], at: float
    ) -> BorrowRecord:
        if lender == borrower:
            raise SpecViolation("instance cannot borrow from itself")
        if lender not in self._live:
            raise DeadSubOS(lender)
        if borrower not in self._live:
            raise DeadSubOS(borrower)
        kind, ident = resource
        if self.owner_of(kind, ident) != subos_owner(lender):
            raise NotOwner(resource, self.owner_of(kind, ident))
        rec = BorrowRecord(lender, borrower, (kind, ident), at)
        self.borrows.append(rec)
        return rec

    # -- shared state -----------------------------------------------------------

    def update_shared_state(self, mutation: Mutation) -> int:
        """Apply one mutation and return the new version."""
        t = self.shared
        if isinstance(mutation, SetCommCore):
            if mutation.subos not in self._live:
                raise DeadSubOS(mutation.subos)
            if self.owner_of(CORE, mutation.core) != subos_owner(mutation.subos):
                raise InvalidCommCore(
                    f"core {mutation.core} not owned by {mutation.subos}"
                )
            t.comm_core[mutation.subos] = mutation.core
        elif isinstance(mutation, RegisterMac):
            if mutation.subos not in self._live:
                raise DeadSubOS(mutation.subos)
            if mutation.mac in t.macs:
                raise DuplicateMac(mutation.mac)
            t.macs[mutation.mac] = mutation.subos
        elif isinstance(mutation, UnregisterMac):
            if t.macs.get(mutation.mac) != mutation.subos:
                raise NotOwner(("mac", mutation.mac), t.macs.get(mutation.mac))
            del t.macs[mutation.mac]
        elif isinstance(mutation, RemoveSubOS):
            t.comm_core.pop(mutation.subos, None)
            t.macs = {m: s for m, s in t.macs.items() if s != mutation.subos}
        else:
            raise SpecViolation(f"unknown mutation {mutation!r}")
        t.version += 1
        return t.version

    def shared_snapshot(self) -> tuple[dict[str, int], dict[str, str], int]:
        """Consistent (comm_core, macs, version) copy."""
        t = self.shared
        return dict(t.comm_core), dict(t.macs), t.version

    # -- protected resource classes ------------------------------------------------

    def with_protected(self, cls: ProtectedClass, action: Callable[[], T]) -> T:
        """Run action under the exclusive lock of one protected class."""
        with self._locks[cls]:
            return action()

    # -- audit and dump ----------------------------------------------------------

    def audit(self) -> None:
        """Assert partition safety; raises AssertionError on any breach."""
        counts: dict[Owner, int] = {}
        for o in self._core_owner:
            counts[o] = counts.get(o, 0) + 1
        assert counts.get(SUPERVISOR, 0) >= 1, "supervisor core floor broken"
        assert sum(counts.values()) == self.spec.total_cores
        assert len(self._region_owner) == self.spec.total_regions
        for sid in self._live:
            own = subos_owner(sid)
            assert any(o == own for o in self._core_owner), f"{sid} live with no core"
        for sid, core in self.shared.comm_core.items():
            assert self._core_owner[core] == subos_owner(sid), (
                f"comm core {core} not owned by {sid}"
            )
        for mac, sid in self.shared.macs.items():
            assert sid in self._live, f"mac {mac} owned by dead {sid}"

    def snapshot(self) -> dict:
        """Deep-enough copy for no-mutation-on-error checks in tests."""
        return {
            "cores": list(self._core_owner),
            "regions": list(self._region_owner),
            "devices": dict(self._device_owner),
            "live": set(self._live),
            "comm_core": dict(self.shared.comm_core),
            "macs": dict(self.shared.macs),
            "version": self.shared.version,
            "borrows": list(self.borrows),
        }

    def to_json_dict(self) -> dict:
        return {
            "spec": {
                "total_cores": self.spec.total_cores,
                "total_memory": self.spec.total_memory,
                "region_bytes": self.spec.region_bytes,
                "devices": list(self.spec.devices),
            },
            "core_owner": [str(o) for o in self._core_owner],
            "region_owner": [str(o) for o in self._region_owner],
            "device_owner": {d: str(o) for d, o in self._device_owner.items()},
            "live": sorted(self._live),
            "shared_state": {
                "comm_core": dict(self.shared.comm_core),
                "macs": dict(self.shared.macs),
                "version": self.shared.version,
            },
            "borrows": [
                {
                    "lender": b.lender,
                    "borrower": b.borrower,
                    "resource": list(b.resource),
                    "registered_at": b.registered_at,
                }
                for b in self.borrows
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Ledger":
        spec = NodeSpec(
            total_cores=data["spec"]["total_cores"],
            total_memory=data["spec"]["total_memory"],
            region_bytes=data["spec"]["region_bytes"],
            devices=tuple(data["spec"]["devices"]),
        )
        led = cls.__new__(cls)
        led.spec = spec
        led._core_owner = [parse_owner(o) for o in data["core_owner"]]
        led._region_owner = [parse_owner(o) for o in data["region_owner"]]
        led._device_owner = {d: parse_owner(o) for d, o in data["device_owner"].items()}
        led._live = set(data["live"])
        led.shared = SharedStateTable(
            comm_core=dict(data["shared_state"]["comm_core"]),
            macs=dict(data["shared_state"]["macs"]),
            version=data["shared_state"]["version"],
        )
        led.borrows = [
            BorrowRecord(
                b["lender"], b["borrower"], (b["resource"][0], b["resource"][1]), b["registered_at"]
            )
            for b in data["borrows"]
        ]
        led._locks = {c: threading.Lock() for c in ProtectedClass}
        return led


def init_node(spec: NodeSpec, supervisor_cores: int, supervisor_memory: int) -> Ledger:
    """Stand up a ledger with the supervisor's holdings carved out."""
    return Ledger(spec, supervisor_cores, supervisor_memory)
