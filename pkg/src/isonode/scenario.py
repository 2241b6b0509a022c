"""Scenario files: JSON description of a node, instances, workloads, and
scheduler, executed end-to-end on the virtual clock with CSV reports.

Exit discipline for runners: 0 success, 2 scenario validation failure
(message names the offending field path), 3 runtime failure.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channels import CommHub
from .clock import VirtualClock
from .errors import IsoNodeError, NeverCompletes, ScenarioError
from .fabric import Fabric
from .ledger import Ledger, NodeSpec
from .lifecycle import LatencyModel, NodeManager
from .netloop import Frame, NetLoop
from .sched import SchedulerConfig, run_loop
from .workloads.batchjob import simulate_batch
from .workloads.generate import gen_poisson, gen_uniform
from .workloads.queueing import ContentionCurve, QueueSim, ServiceTime
from .workloads.stats import LatencyHistogram

SIZE_SUFFIX = {"k": 1 << 10, "m": 1 << 20, "g": 1 << 30, "t": 1 << 40}


def parse_size(value, path: str = "size") -> int:
    """Bytes from an int or a string like 512M / 16G (binary units)."""
    if isinstance(value, bool):
        raise ScenarioError(path, "expected a byte size")
    if isinstance(value, int):
        return value
    if isinstance(value, str) and value:
        s = value.strip().lower()
        mult = 1
        if s[-1] in SIZE_SUFFIX:
            mult = SIZE_SUFFIX[s[-1]]
            s = s[:-1]
        try:
            return int(s) * mult
        except ValueError:
            pass
    raise ScenarioError(path, f"cannot parse byte size {value!r}")


def _req(d: dict, path: str, key: str, types) -> object:
    if key not in d:
        raise ScenarioError(f"{path}.{key}", "missing required field")
    v = d[key]
    if not isinstance(v, types) or isinstance(v, bool):
        raise ScenarioError(f"{path}.{key}", f"expected {types}, got {type(v).__name__}")
    return v


def _opt(d: dict, path: str, key: str, types, default):
    if key not in d:
        return default
    v = d[key]
    if not isinstance(v, types) or isinstance(v, bool):
        raise ScenarioError(f"{path}.{key}", f"expected {types}, got {type(v).__name__}")
    return v


NUM = (int, float)


@dataclass
class SubOSDef:
    name: str
    cores: int
    memory: int
    devices: tuple[str, ...] = ()


@dataclass
class ServiceWorkload:
    subos: str
    arrivals_kind: str  # "uniform" | "poisson"
    rate: float
    service_kind: str  # "deterministic" | "exponential" | "empirical"
    service_ms: float
    service_samples_ms: tuple[float, ...]
    contention: ContentionCurve


@dataclass
class BatchWorkload:
    subos: str
    total_work_core_s: float


@dataclass
class FrameDef:
    time: float
    src_mac: str
    dst_mac: str
    payload: bytes


@dataclass
class Scenario:
    node: NodeSpec
    sup_cores: int
    sup_memory: int
    latency: LatencyModel
    seed: int
    duration_s: float
    subos: list[SubOSDef]
    service: ServiceWorkload | None
    batch: BatchWorkload | None
    scheduler: SchedulerConfig | None
    ficm_pairs: list[tuple[str, str]] = field(default_factory=list)
    ficm_chatter: int = 0
    macs: list[tuple[str, str]] = field(default_factory=list)
    frames: list[FrameDef] = field(default_factory=list)
    outputs: tuple[str, ...] = ("decisions", "latencies", "adjustments", "fabric_stats")


KNOWN_OUTPUTS = ("decisions", "latencies", "adjustments", "fabric_stats")


def validate(raw: dict, seed_override: int | None = None) -> Scenario:
    """Typed scenario from raw JSON; raises ScenarioError with a field path."""
    if not isinstance(raw, dict):
        raise ScenarioError("$", "scenario must be a JSON object")

    node_d = _req(raw, "$", "node", dict)
    try:
        node = NodeSpec(
            total_cores=int(_req(node_d, "node", "cores", int)),
            total_memory=parse_size(_req(node_d, "node", "memory", (int, str)), "node.memory"),
            region_bytes=parse_size(_opt(node_d, "node", "region_bytes", (int, str), 128 << 20), "node.region_bytes"),
            devices=tuple(_opt(node_d, "node", "devices", list, [])),
        )
    except IsoNodeError as e:
        if isinstance(e, ScenarioError):
            raise
        raise ScenarioError("node", str(e)) from None

    sup_d = _opt(raw, "$", "supervisor", dict, {})
    sup_cores = int(_opt(sup_d, "supervisor", "cores", int, 1))
    sup_memory = parse_size(_opt(sup_d, "supervisor", "memory", (int, str), node.region_bytes * 2), "supervisor.memory")

    lat_d = _opt(raw, "$", "latency_model", dict, {})
    known_lat = {
        "create_s", "destroy_s", "cpu_online_s", "cpu_offline_s",
        "mem_online_s_per_512M", "mem_offline_s_per_512M",
    }
    for k in lat_d:
        if k not in known_lat:
            raise ScenarioError(f"latency_model.{k}", "unknown latency field")
        if not isinstance(lat_d[k], NUM) or isinstance(lat_d[k], bool):
            raise ScenarioError(f"latency_model.{k}", "expected a number")
    try:
        latency = LatencyModel(**{k: float(v) for k, v in lat_d.items()})
    except IsoNodeError as e:
        raise ScenarioError("latency_model", str(e)) from None

    duration = float(_req(raw, "$", "duration_s", NUM))
    if duration <= 0:
        raise ScenarioError("duration_s", "must be positive")

    subos_l = _req(raw, "$", "subos", list)
    if not subos_l:
        raise ScenarioError("subos", "need at least one instance")
    defs: list[SubOSDef] = []
    names: set[str] = set()
    for i, sd in enumerate(subos_l):
        p = f"subos[{i}]"
        if not isinstance(sd, dict):
            raise ScenarioError(p, "expected an object")
        name = str(_req(sd, p, "name", str))
        if name in names:
            raise ScenarioError(f"{p}.name", f"duplicate instance name {name!r}")
        names.add(name)
        defs.append(
            SubOSDef(
                name=name,
                cores=int(_req(sd, p, "cores", int)),
                memory=parse_size(_req(sd, p, "memory", (int, str)), f"{p}.memory"),
                devices=tuple(_opt(sd, p, "devices", list, [])),
            )
        )

    stochastic = False
    service = None
    batch = None
    wl = _opt(raw, "$", "workloads", dict, {})
    if "service" in wl:
        p = "workloads.service"
        sd = _req(wl, "workloads", "service", dict)
        sub = str(_req(sd, p, "subos", str))
        if sub not in names:
            raise ScenarioError(f"{p}.subos", f"unknown instance {sub!r}")
        arr = _req(sd, p, "arrivals", dict)
        akind = str(_req(arr, f"{p}.arrivals", "kind", str))
        if akind not in ("uniform", "poisson"):
            raise ScenarioError(f"{p}.arrivals.kind", f"unknown arrival kind {akind!r}")
        rate = float(_req(arr, f"{p}.arrivals", "rate", NUM))
        if rate <= 0:
            raise ScenarioError(f"{p}.arrivals.rate", "must be positive")
        if akind == "poisson":
            stochastic = True
        st = _req(sd, p, "service_time", dict)
        skind = str(_req(st, f"{p}.service_time", "kind", str))
        sms = 0.0
        ssamples: tuple[float, ...] = ()
        if skind == "deterministic":
            sms = float(_req(st, f"{p}.service_time", "ms", NUM))
        elif skind == "exponential":
            sms = float(_req(st, f"{p}.service_time", "mean_ms", NUM))
            stochastic = True
        elif skind == "empirical":
            ssamples = tuple(float(x) for x in _req(st, f"{p}.service_time", "samples_ms", list))
            stochastic = True
        else:
            raise ScenarioError(f"{p}.service_time.kind", f"unknown kind {skind!r}")
        if skind != "empirical" and sms <= 0:
            raise ScenarioError(f"{p}.service_time", "service time must be positive")
        cd = _opt(sd, p, "contention", dict, None)
        if cd is None:
            curve = ContentionCurve()
        else:
            try:
                curve = ContentionCurve(
                    alpha=float(_opt(cd, f"{p}.contention", "alpha", NUM, 0.05)),
                    mode=str(_opt(cd, f"{p}.contention", "mode", str, "isolated")),
                    external_contenders=float(
                        _opt(cd, f"{p}.contention", "external_contenders", NUM, 0.0)
                    ),
                )
            except IsoNodeError as e:
                raise ScenarioError(f"{p}.contention", str(e)) from None
        service = ServiceWorkload(sub, akind, rate, skind, sms, ssamples, curve)
    if "batch" in wl:
        p = "workloads.batch"
        bd = _req(wl, "workloads", "batch", dict)
        sub = str(_req(bd, p, "subos", str))
        if sub not in names:
            raise ScenarioError(f"{p}.subos", f"unknown instance {sub!r}")
        work = float(_req(bd, p, "total_work_core_s", NUM))
        if work <= 0:
            raise ScenarioError(f"{p}.total_work_core_s", "must be positive")
        batch = BatchWorkload(sub, work)

    scheduler = None
    if "scheduler" in raw:
        p = "scheduler"
        sch = _req(raw, "$", "scheduler", dict)
        if service is None or batch is None:
            raise ScenarioError(p, "scheduler requires workloads.service and workloads.batch")
        try:
            scheduler = SchedulerConfig(
                lt_ms=float(_req(sch, p, "lt_ms", NUM)),
                ut_ms=float(_req(sch, p, "ut_ms", NUM)),
                service=service.subos,
                batch=batch.subos,
                window_s=float(_opt(sch, p, "window_s", NUM, 10.0)),
                percentile=float(_opt(sch, p, "percentile", NUM, 0.99)),
                min_cores_each=int(_opt(sch, p, "min_cores_each", int, 1)),
            )
        except IsoNodeError as e:
            raise ScenarioError(p, str(e)) from None

    ficm_pairs: list[tuple[str, str]] = []
    chatter = 0
    macs: list[tuple[str, str]] = []
    frames: list[FrameDef] = []
    ch = _opt(raw, "$", "channels", dict, {})
    if "ficm" in ch:
        p = "channels.ficm"
        fd = _req(ch, "channels", "ficm", dict)
        for i, pair in enumerate(_opt(fd, p, "pairs", list, [])):
            if not (isinstance(pair, list) and len(pair) == 2):
                raise ScenarioError(f"{p}.pairs[{i}]", "expected [a, b]")
            a, b = str(pair[0]), str(pair[1])
            for nm in (a, b):
                if nm not in names:
                    raise ScenarioError(f"{p}.pairs[{i}]", f"unknown instance {nm!r}")
            ficm_pairs.append((a, b))
        chatter = int(_opt(fd, p, "chatter", int, 0))
    if "rfloop" in ch:
        p = "channels.rfloop"
        rd = _req(ch, "channels", "rfloop", dict)
        for sub, mac in _opt(rd, p, "macs", dict, {}).items():
            if sub not in names:
                raise ScenarioError(f"{p}.macs.{sub}", f"unknown instance {sub!r}")
            macs.append((sub, str(mac)))
        for i, fr in enumerate(_opt(rd, p, "frames", list, [])):
            fp = f"{p}.frames[{i}]"
            if not isinstance(fr, dict):
                raise ScenarioError(fp, "expected an object")
            try:
                payload = bytes.fromhex(str(_opt(fr, fp, "payload_hex", str, "")))
            except ValueError:
                raise ScenarioError(f"{fp}.payload_hex", "invalid hex") from None
            frames.append(
                FrameDef(
                    time=float(_opt(fr, fp, "time", NUM, 0.0)),
                    src_mac=str(_req(fr, fp, "src_mac", str)),
                    dst_mac=str(_req(fr, fp, "dst_mac", str)),
                    payload=payload,
                )
            )

    outputs = tuple(_opt(raw, "$", "outputs", list, list(KNOWN_OUTPUTS)))
    for o in outputs:
        if o not in KNOWN_OUTPUTS:
            raise ScenarioError("outputs", f"unknown report selector {o!r}")

    seed = raw.get("seed")
    if seed_override is not None:
        seed = seed_override
    if seed is None:
        if stochastic:
            raise ScenarioError("seed", "required when the scenario has stochastic elements")
        seed = 0
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ScenarioError("seed", "must be an integer")

    # Cross checks that need full context.
    alloc = node.total_cores - sup_cores
    if sum(d.cores for d in defs) > alloc:
        raise ScenarioError("subos", f"instances request more cores than the {alloc} allocatable")

    return Scenario(
        node=node,
        sup_cores=sup_cores,
        sup_memory=sup_memory,
        latency=latency,
        seed=int(seed),
        duration_s=duration,
        subos=defs,
        service=service,
        batch=batch,
        scheduler=scheduler,
        ficm_pairs=ficm_pairs,
        ficm_chatter=chatter,
        macs=macs,
        frames=frames,
        outputs=outputs,
    )


# -- execution ----------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def _write_csv(path: Path, header: list[str], rows: list[list[str]]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def execute(scn: Scenario, out_dir: str | Path) -> dict:
    """Run a validated scenario and write reports; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    mgr = NodeManager(
        clock=VirtualClock(),
        ledger=Ledger(scn.node, scn.sup_cores, scn.sup_memory),
        latency=scn.latency,
    )
    fabric = Fabric()
    hub = CommHub()
    loop = NetLoop(mgr.ledger)
    mgr.add_invalidation_hook(fabric.detach)
    mgr.add_invalidation_hook(hub.detach)
    mgr.add_invalidation_hook(loop.detach)

    for d in scn.subos:
        mgr.create_subos(d.cores, d.memory, devices=d.devices, name=d.name)
        fabric.attach(d.name)
        hub.attach(d.name)

    t0 = mgr.clock.now  # all instances running; workload starts here

    for a, b in scn.ficm_pairs:
        fabric.open_pair(a, b)
    for i in range(scn.ficm_chatter):
        for a, b in scn.ficm_pairs:
            for src, dst in ((a, b), (b, a)):
                payload = f"{src}->{dst} #{i}".encode().ljust(64, b".")[:64]
                fabric.send(src, dst, payload)
    for a, b in scn.ficm_pairs:
        fabric.drain(a, budget=2 ** 20)
        fabric.drain(b, budget=2 ** 20)

    for sub, mac in scn.macs:
        loop.register_mac(sub, mac)
    for fr in scn.frames:
        loop.inject(Frame(fr.dst_mac, fr.src_mac, fr.payload), at=t0 + fr.time)

    rng = np.random.default_rng(scn.seed)
    decisions_rows: list[list[str]] = []
    latency_rows: list[list[str]] = []
    summary: dict[str, object] = {"requests": 0, "completed": 0}
    hist = LatencyHistogram([])
    history = []
    batch_completion: float | None = None
    timeline: list[tuple[float, float]] = []

    if scn.service is not None:
        sw = scn.service
        if sw.arrivals_kind == "uniform":
            schedule = gen_uniform(sw.rate, scn.duration_s, start=t0)
        else:
            schedule = gen_poisson(sw.rate, scn.duration_s, seed=scn.seed, start=t0)
        st = ServiceTime(
            kind=sw.service_kind, value=sw.service_ms / 1e3,
            samples=tuple(s / 1e3 for s in sw.service_samples_ms),
        )
        services = st.draw(len(schedule), rng)
        svc_cores0 = len(mgr.descriptors[sw.subos].grant.cores)
        sim = QueueSim(
            schedule.times,
            services,
            cores=svc_cores0,
            max_cores=scn.node.total_cores - scn.sup_cores,
            contention=sw.contention,
        )

        if scn.batch is not None:
            timeline.append((t0, float(len(mgr.descriptors[scn.batch.subos].grant.cores))))

        if scn.scheduler is not None:
            cfg = scn.scheduler
            n_windows = int(scn.duration_s / cfg.window_s + 1e-9)

            def feed():
                for w in range(1, n_windows + 1):
                    t_w = t0 + w * cfg.window_s
                    comps = sim.advance_to(t_w)
                    samples = [(tc - sim.arr[r]) * 1e3 for r, tc in comps]
                    yield (t_w, samples)

            def on_move(action, svc_cores, bat_cores):
                sim.advance_to(mgr.clock.now)
                sim.set_cores(svc_cores, at=mgr.clock.now)
                timeline.append((mgr.clock.now, float(bat_cores)))

            history = run_loop(cfg, mgr, feed(), on_move=on_move)
            for dec in history:
                decisions_rows.append(
                    [
                        _fmt(dec.window_end),
                        _fmt(dec.p_tail_ms) if dec.p_tail_ms is not None else "",
                        str(dec.action),
                        str(dec.service_cores),
                        str(dec.batch_cores),
                    ]
                )
        sim.run_to_end()
        hist = LatencyHistogram(sim.latencies_ms())
        summary["requests"] = sim.n
        summary["completed"] = sim.completed
        for r in range(sim.n):
            lat_ms = (sim.comp_t[r] - sim.arr[r]) * 1e3
            latency_rows.append(
                [str(r), _fmt(sim.arr[r]), _fmt(sim.comp_t[r]), _fmt(lat_ms)]
            )

    if scn.batch is not None:
        if not timeline:
            timeline.append((t0, float(len(mgr.descriptors[scn.batch.subos].grant.cores))))
        try:
            batch_completion = simulate_batch(scn.batch.total_work_core_s, timeline)
        except NeverCompletes:
            batch_completion = None

    if "decisions" in scn.outputs:
        _write_csv(
            out / "decisions.csv",
            ["window_end_s", "p_tail_ms", "action", "service_cores", "batch_cores"],
            decisions_rows,
        )
    if "latencies" in scn.outputs:
        _write_csv(
            out / "latencies.csv",
            ["request", "arrival_s", "completion_s", "latency_ms"],
            latency_rows,
        )
    if "adjustments" in scn.outputs:
        _write_csv(
            out / "adjustments.csv",
            ["time_s", "subos", "op", "delta", "charged_s"],
            [
                [_fmt(r.time), r.subos, r.op.value, r.delta_str(), _fmt(r.charged)]
                for r in mgr.adjustment_log()
            ],
        )
    if "fabric_stats" in scn.outputs:
        _write_csv(
            out / "fabric_stats.csv",
            ["subos", "sent", "drained", "doorbells", "full_events"],
            [
                [sid, str(st["sent"]), str(st["drained"]), str(st["doorbells"]), str(st["full_events"])]
                for sid, st in sorted(fabric.stats().items())
            ],
        )
    if scn.frames or scn.macs:
        _write_csv(
            out / "trace.csv",
            ["time_s", "src_mac", "dst_mac", "decision"],
            [list(row) for row in loop.trace_rows()],
        )

    s = hist.summary()
    moves_s = sum(1 for d in history if d.action.kind == "move-to-service")
    moves_b = sum(1 for d in history if d.action.kind == "move-to-batch")
    summary.update(
        {
            "mean_ms": s["mean"],
            "p50_ms": s["p50"],
            "p95_ms": s["p95"],
            "p99_ms": s["p99"],
            "max_ms": s["max"],
            "decisions": len(history),
            "moves_to_service": moves_s,
            "moves_to_batch": moves_b,
            "holds": len(history) - moves_s - moves_b,
            "batch_completion_s": batch_completion,
            "adjustments": len(mgr.adjustment_log()),
            "clock_end_s": mgr.clock.now,
        }
    )
    if scn.service is not None:
        summary["final_service_cores"] = len(mgr.descriptors[scn.service.subos].grant.cores)
    if scn.batch is not None:
        summary["final_batch_cores"] = len(mgr.descriptors[scn.batch.subos].grant.cores)

    with open(out / "summary.txt", "w", newline="") as f:
        for key, val in summary.items():
            if isinstance(val, float):
                f.write(f"{key}={val:.6f}\n")
            elif val is None:
                f.write(f"{key}=never\n")
            else:
                f.write(f"{key}={val}\n")
    return summary


def run_file(path: str | Path, out_dir: str | Path, seed_override: int | None = None) -> int:
    """Load, validate, execute; maps errors to the exit-code contract."""
    try:
        with open(path) as f:
            raw = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        print(f"scenario error: {path}: {e}", file=sys.stderr)
        return 2
    try:
        scn = validate(raw, seed_override=seed_override)
    except ScenarioError as e:
        print(f"scenario error: {e}", file=sys.stderr)
        return 2
    try:
        execute(scn, out_dir)
    except Exception as e:  # noqa: BLE001 - report and map to exit code
        print(f"runtime error: {e}", file=sys.stderr)
        return 3
    return 0
