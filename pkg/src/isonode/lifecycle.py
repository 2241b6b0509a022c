"""Instance lifecycle: create, destroy, and resize on a virtual clock.

Each operation moves ownership through the ledger, charges the configured
adjustment latency to the virtual clock, and appends one record to the
supervisor's append-only adjustment log. Failed operations leave the clock,
the ledger, and the log untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterable

from .clock import VirtualClock
from .errors import (
    AlreadyDestroyed,
    CommCoreInUse,
    DeadSubOS,
    NotOwner,
    SpecViolation,
    UnknownSubOS,
    WouldEmptySubOS,
)
from .ledger import (
    CORE,
    Ledger,
    NodeSpec,
    RemoveSubOS,
    ResourceGrant,
    SetCommCore,
    subos_owner,
)

MiB_512 = 512 * (1 << 20)


@dataclass(frozen=True)
class LatencyModel:
    """Seconds charged per adjustment, measured on the reference system."""

    create_s: float = 6.1
    destroy_s: float = 0.0
    cpu_online_s: float = 0.066
    cpu_offline_s: float = 0.054
    mem_online_s_per_512M: float = 0.020
    mem_offline_s_per_512M: float = 0.060

    def __post_init__(self) -> None:
        for name in self.__dataclass_fields__:
            if getattr(self, name) < 0:
                raise SpecViolation(f"latency {name} cannot be negative")

    def cpu_charge(self, delta: int) -> float:
        rate = self.cpu_online_s if delta > 0 else self.cpu_offline_s
        return abs(delta) * rate

    def mem_charge(self, delta_regions: int, region_bytes: int) -> float:
        rate = self.mem_online_s_per_512M if delta_regions > 0 else self.mem_offline_s_per_512M
        moved = abs(delta_regions) * region_bytes
        return (moved / MiB_512) * rate


class SubOSState(Enum):
    PREPARING = "preparing"
    RUNNING = "running"
    DRAINING = "draining"
    DESTROYED = "destroyed"


@dataclass(frozen=True)
class BootInfo:
    """Minimal hardware description handed to a new instance."""

    smp_table: tuple[int, ...]
    memory_map: tuple[tuple[int, int], ...]  # (region id, bytes)
    boot_params: dict[str, str]


@dataclass
class SubOSDescriptor:
    id: str
    state: SubOSState
    grant: ResourceGrant
    boot_info: BootInfo
    comm_core: int
    created_at: float
    destroyed_at: float | None = None

    @property
    def core_count(self) -> int:
        return len(self.grant.cores)

    @property
    def region_count(self) -> int:
        return len(self.grant.regions)


class AdjustOp(Enum):
    CREATE = "create"
    DESTROY = "destroy"
    CPU_ONLINE = "cpu-online"
    CPU_OFFLINE = "cpu-offline"
    MEM_ONLINE = "mem-online"
    MEM_OFFLINE = "mem-offline"


@dataclass(frozen=True)
class AdjustmentRecord:
    time: float
    subos: str
    op: AdjustOp
    cores: tuple[int, ...] = ()
    regions: tuple[int, ...] = ()
    devices: tuple[str, ...] = ()
    charged: float = 0.0

    def delta_str(self) -> str:
        if self.op in (AdjustOp.CREATE, AdjustOp.DESTROY):
            return (
                f"cores={len(self.cores)},regions={len(self.regions)},"
                f"devices={len(self.devices)}"
            )
        sign = "+" if self.op in (AdjustOp.CPU_ONLINE, AdjustOp.MEM_ONLINE) else "-"
        if self.op in (AdjustOp.CPU_ONLINE, AdjustOp.CPU_OFFLINE):
            return f"cores={sign}{len(self.cores)}"
        return f"regions={sign}{len(self.regions)}"


@dataclass(frozen=True)
class ReclaimReport:
    subos: str
    cores: tuple[int, ...]
    regions: tuple[int, ...]
    devices: tuple[str, ...]
    charged: float


@dataclass
class NodeManager:
    """Supervisor-side orchestrator owning the clock, ledger, and log."""

    clock: VirtualClock
    ledger: Ledger
    latency: LatencyModel = field(default_factory=LatencyModel)
    descriptors: dict[str, SubOSDescriptor] = field(default_factory=dict)
    log: list[AdjustmentRecord] = field(default_factory=list)
    _hooks: list[Callable[[str], None]] = field(default_factory=list)
    _next_id: int = 0

    def add_invalidation_hook(self, hook: Callable[[str], None]) -> None:
        """hook(subos_id) runs at the start of every destroy."""
        self._hooks.append(hook)

    def _fresh_id(self) -> str:
        while True:
            sid = f"s{self._next_id}"
            self._next_id += 1
            if sid not in self.descriptors:
                return sid

    def _running(self, subos: str) -> SubOSDescriptor:
        try:
            d = self.descriptors[subos]
        except KeyError:
            raise UnknownSubOS(subos) from None
        if d.state == SubOSState.DESTROYED:
            raise DeadSubOS(subos)
        return d

    # -- create -----------------------------------------------------------

    def create_subos(
        self,
        cores: int | Iterable[int],
        memory_bytes: int,
        devices: Iterable[str] = (),
        name: str | None = None,
    ) -> SubOSDescriptor:
        if isinstance(cores, int) and cores < 1:
            raise SpecViolation("an instance needs at least one core")
        regions = self.ledger.spec.regions_for(memory_bytes)
        if regions < 1:
            raise SpecViolation("an instance needs at least one memory region")
        sid = name if name is not None else self._fresh_id()
        if sid in self.descriptors and self.descriptors[sid].state != SubOSState.DESTROYED:
            raise SpecViolation(f"instance id {sid!r} already in use")

        grant = self.ledger.allocate(sid, cores=cores, regions=regions, devices=devices)
        comm = min(grant.cores)
        self.ledger.update_shared_state(SetCommCore(sid, comm))
        boot = BootInfo(
            smp_table=tuple(sorted(grant.cores)),
            memory_map=tuple((r, self.ledger.spec.region_bytes) for r in sorted(grant.regions)),
            boot_params={"passthrough_devices": ",".join(sorted(grant.devices))},
        )
        desc = SubOSDescriptor(
            id=sid,
            state=SubOSState.PREPARING,
            grant=grant,
            boot_info=boot,
            comm_core=comm,
            created_at=self.clock.now,
        )
        self.descriptors[sid] = desc
        self.clock.advance(self.latency.create_s)
        desc.state = SubOSState.RUNNING
        desc.created_at = self.clock.now
        self.log.append(
            AdjustmentRecord(
                time=self.clock.now,
                subos=sid,
                op=AdjustOp.CREATE,
                cores=tuple(sorted(grant.cores)),
                regions=tuple(sorted(grant.regions)),
                devices=tuple(sorted(grant.devices)),
                charged=self.latency.create_s,
            )
        )
        return desc

    # -- destroy -----------------------------------------------------------

    def destroy_subos(self, subos: str) -> ReclaimReport:
        try:
            d = self.descriptors[subos]
        except KeyError:
            raise UnknownSubOS(subos) from None
        if d.state == SubOSState.DESTROYED:
            raise AlreadyDestroyed(subos)
        d.state = SubOSState.DRAINING
        for hook in self._hooks:
            hook(subos)
        grant = d.grant
        self.ledger.update_shared_state(RemoveSubOS(subos))
        self.ledger.release(subos, grant)
        self.ledger.retire(subos)
        self.clock.advance(self.latency.destroy_s)
        d.state = SubOSState.DESTROYED
        d.grant = ResourceGrant()
        d.destroyed_at = self.clock.now
        self.log.append(
            AdjustmentRecord(
                time=self.clock.now,
                subos=subos,
                op=AdjustOp.DESTROY,
                cores=tuple(sorted(grant.cores)),
                regions=tuple(sorted(grant.regions)),
                devices=tuple(sorted(grant.devices)),
                charged=self.latency.destroy_s,
            )
        )
        return ReclaimReport(
            subos=subos,
            cores=tuple(sorted(grant.cores)),
            regions=tuple(sorted(grant.regions)),
            devices=tuple(sorted(grant.devices)),
            charged=self.latency.destroy_s,
        )

    # -- resize -----------------------------------------------------------

    def resize_cpu(
        self, subos: str, delta: int, cores: Iterable[int] | None = None
    ) -> tuple[int, ...]:
        """Add (delta>0) or remove (delta<0) cores; returns the new core set.

        Removal never touches the communication core: auto-selection skips it
        and an explicit list naming it is rejected.
        """
        d = self._running(subos)
        if delta == 0:
            return tuple(sorted(d.grant.cores))
        if delta > 0:
            want: int | list[int] = delta
            if cores is not None:
                want = list(cores)
                if len(want) != delta:
                    raise SpecViolation("explicit core list does not match delta")
            got = self.ledger.allocate(subos, cores=want)
            moved = sorted(got.cores)
            op = AdjustOp.CPU_ONLINE
        else:
            k = -delta
            if d.core_count - k < 1:
                raise WouldEmptySubOS(subos)
            if cores is not None:
                sel = sorted(cores)
                if len(sel) != k:
                    raise SpecViolation("explicit core list does not match delta")
                if d.comm_core in sel:
                    raise CommCoreInUse(f"core {d.comm_core} is the comm core of {subos}")
                own = subos_owner(subos)
                for c in sel:
                    if self.ledger.owner_of(CORE, c) != own:
                        raise NotOwner((CORE, c), self.ledger.owner_of(CORE, c))
            else:
                sel = sorted(
                    (c for c in d.grant.cores if c != d.comm_core), reverse=True
                )[:k]
            self.ledger.release(subos, ResourceGrant(cores=frozenset(sel)))
            moved = sorted(sel)
            op = AdjustOp.CPU_OFFLINE
        charged = self.latency.cpu_charge(delta)
        self.clock.advance(charged)
        d.grant = self.ledger.grant_of(subos)
        d.boot_info = replace(d.boot_info, smp_table=tuple(sorted(d.grant.cores)))
        self.log.append(
            AdjustmentRecord(
                time=self.clock.now,
                subos=subos,
                op=op,
                cores=tuple(moved),
                charged=charged,
            )
        )
        return tuple(sorted(d.grant.cores))

    def resize_memory(self, subos: str, delta_regions: int) -> tuple[int, ...]:
        """Add or remove whole memory regions; returns the new region set."""
        d = self._running(subos)
        if delta_regions == 0:
            return tuple(sorted(d.grant.regions))
        if delta_regions > 0:
            got = self.ledger.allocate(subos, regions=delta_regions)
            moved = sorted(got.regions)
            op = AdjustOp.MEM_ONLINE
        else:
            k = -delta_regions
            if d.region_count - k < 1:
                raise WouldEmptySubOS(subos)
            sel = sorted(d.grant.regions, reverse=True)[:k]
            self.ledger.release(subos, ResourceGrant(regions=frozenset(sel)))
            moved = sorted(sel)
            op = AdjustOp.MEM_OFFLINE
        charged = self.latency.mem_charge(delta_regions, self.ledger.spec.region_bytes)
        self.clock.advance(charged)
        d.grant = self.ledger.grant_of(subos)
        d.boot_info = replace(
            d.boot_info,
            memory_map=tuple(
                (r, self.ledger.spec.region_bytes) for r in sorted(d.grant.regions)
            ),
        )
        self.log.append(
            AdjustmentRecord(
                time=self.clock.now,
                subos=subos,
                op=op,
                regions=tuple(moved),
                charged=charged,
            )
        )
        return tuple(sorted(d.grant.regions))

    def set_comm_core(self, subos: str, core: int) -> int:
        """Reassign the communication core; required before removing the old one."""
        d = self._running(subos)
        self.ledger.update_shared_state(SetCommCore(subos, core))
        d.comm_core = core
        return core

    def adjustment_log(self) -> tuple[AdjustmentRecord, ...]:
        return tuple(self.log)

    # -- persistence -----------------------------------------------------------

    def to_state_dict(self) -> dict:
        return {
            "clock": self.clock.now,
            "ledger": self.ledger.to_json_dict(),
            "latency": {
                "create_s": self.latency.create_s,
                "destroy_s": self.latency.destroy_s,
                "cpu_online_s": self.latency.cpu_online_s,
                "cpu_offline_s": self.latency.cpu_offline_s,
                "mem_online_s_per_512M": self.latency.mem_online_s_per_512M,
                "mem_offline_s_per_512M": self.latency.mem_offline_s_per_512M,
            },
            "next_id": self._next_id,
            "descriptors": {
                sid: {
                    "state": d.state.value,
                    "cores": sorted(d.grant.cores),
                    "regions": sorted(d.grant.regions),
                    "devices": sorted(d.grant.devices),
                    "smp_table": list(d.boot_info.smp_table),
                    "memory_map": [list(e) for e in d.boot_info.memory_map],
                    "boot_params": dict(d.boot_info.boot_params),
                    "comm_core": d.comm_core,
                    "created_at": d.created_at,
                    "destroyed_at": d.destroyed_at,
                }
                for sid, d in sorted(self.descriptors.items())
            },
            "log": [
                {
                    "time": r.time,
                    "subos": r.subos,
                    "op": r.op.value,
                    "cores": list(r.cores),
                    "regions": list(r.regions),
                    "devices": list(r.devices),
                    "charged": r.charged,
                }
                for r in self.log
            ],
        }

    @classmethod
    def from_state_dict(cls, data: dict) -> "NodeManager":
        mgr = cls(
            clock=VirtualClock(data["clock"]),
            ledger=Ledger.from_json_dict(data["ledger"]),
            latency=LatencyModel(**data["latency"]),
        )
        mgr._next_id = data["next_id"]
        for sid, dd in data["descriptors"].items():
            mgr.descriptors[sid] = SubOSDescriptor(
                id=sid,
                state=SubOSState(dd["state"]),
                grant=ResourceGrant(
                    cores=frozenset(dd["cores"]),
                    regions=frozenset(dd["regions"]),
                    devices=frozenset(dd["devices"]),
                ),
                boot_info=BootInfo(
                    smp_table=tuple(dd["smp_table"]),
                    memory_map=tuple(tuple(e) for e in dd["memory_map"]),
                    boot_params=dict(dd["boot_params"]),
                ),
                comm_core=dd["comm_core"],
                created_at=dd["created_at"],
                destroyed_at=dd["destroyed_at"],
            )
        for rr in data["log"]:
            mgr.log.append(
                AdjustmentRecord(
                    time=rr["time"],
                    subos=rr["subos"],
                    op=AdjustOp(rr["op"]),
                    cores=tuple(rr["cores"]),
                    regions=tuple(rr["regions"]),
                    devices=tuple(rr["devices"]),
                    charged=rr["charged"],
                )
            )
        return mgr


def new_node(
    spec: NodeSpec,
    supervisor_cores: int = 1,
    supervisor_memory: int | None = None,
    latency: LatencyModel | None = None,
) -> NodeManager:
    """Convenience constructor: ledger + fresh clock + default latencies."""
    sup_mem = supervisor_memory if supervisor_memory is not None else spec.region_bytes * 2
    return NodeManager(
        clock=VirtualClock(),
        ledger=Ledger(spec, supervisor_cores, sup_mem),
        latency=latency if latency is not None else LatencyModel(),
    )
