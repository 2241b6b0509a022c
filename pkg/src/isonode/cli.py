"""rfm: command-line operator tool for the partitioned-node emulator.

State lives in a JSON file resolved from --state, then the RFM_STATE
environment variable, then ./rfm-state.json. `rfm run` is stateless and
drives a scenario file instead.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import IsoNodeError
from .ledger import NodeSpec
from .lifecycle import NodeManager, new_node
from .scenario import parse_size, run_file

DEFAULT_STATE = "rfm-state.json"


def _state_path(args: argparse.Namespace) -> Path:
    if args.state:
        return Path(args.state)
    env = os.environ.get("RFM_STATE")
    return Path(env) if env else Path(DEFAULT_STATE)


def _load(args: argparse.Namespace) -> NodeManager:
    path = _state_path(args)
    try:
        with open(path) as f:
            return NodeManager.from_state_dict(json.load(f))
    except FileNotFoundError:
        raise IsoNodeError(f"no node state at {path}; run `rfm init` first") from None
    except (json.JSONDecodeError, KeyError, TypeError) as e:
        raise IsoNodeError(f"unreadable node state at {path}: {e}") from None


def _save(args: argparse.Namespace, mgr: NodeManager) -> None:
    path = _state_path(args)
    with open(path, "w") as f:
        json.dump(mgr.to_state_dict(), f, indent=2, sort_keys=True)
        f.write("\n")


def _devices(spec: str | None) -> tuple[str, ...]:
    if not spec:
        return ()
    return tuple(d.strip() for d in spec.split(",") if d.strip())


def _charged(mgr: NodeManager) -> float:
    return mgr.log[-1].charged if mgr.log else 0.0


def cmd_init(args: argparse.Namespace) -> int:
    spec = NodeSpec(
        total_cores=args.cores,
        total_memory=parse_size(args.memory, "--memory"),
        region_bytes=parse_size(args.region_bytes, "--region-bytes"),
        devices=_devices(args.devices),
    )
    sup_mem = parse_size(args.supervisor_memory, "--supervisor-memory") if args.supervisor_memory else None
    mgr = new_node(spec, supervisor_cores=args.supervisor_cores, supervisor_memory=sup_mem)
    _save(args, mgr)
    print(
        f"initialized node: {spec.total_cores} cores, "
        f"{spec.total_regions} regions of {spec.region_bytes} bytes, "
        f"supervisor holds {args.supervisor_cores} core(s)"
    )
    print(f"state: {_state_path(args)}")
    return 0


def cmd_create(args: argparse.Namespace) -> int:
    mgr = _load(args)
    desc = mgr.create_subos(
        args.cores,
        parse_size(args.memory, "--memory"),
        devices=_devices(args.devices),
        name=args.name,
    )
    _save(args, mgr)
    cores = ",".join(str(c) for c in sorted(desc.grant.cores))
    print(
        f"created {desc.id}: cores=[{cores}] regions={desc.region_count} "
        f"comm_core={desc.comm_core} charged={_charged(mgr):.6f}s"
    )
    return 0


def cmd_destroy(args: argparse.Namespace) -> int:
    mgr = _load(args)
    report = mgr.destroy_subos(args.id)
    _save(args, mgr)
    print(
        f"destroyed {args.id}: reclaimed {len(report.cores)} core(s), "
        f"{len(report.regions)} region(s) charged={report.charged:.6f}s"
    )
    return 0


def cmd_resize_cpu(args: argparse.Namespace) -> int:
    mgr = _load(args)
    try:
        delta = int(args.delta)
    except ValueError:
        raise IsoNodeError(f"bad core delta {args.delta!r}; expected e.g. +2 or -1") from None
    cores = mgr.resize_cpu(args.id, delta)
    _save(args, mgr)
    listing = ",".join(str(c) for c in cores)
    print(f"{args.id} cores now [{listing}] charged={_charged(mgr) if delta else 0.0:.6f}s")
    return 0


def cmd_resize_mem(args: argparse.Namespace) -> int:
    mgr = _load(args)
    raw = args.delta.strip()
    sign = 1
    if raw.startswith(("+", "-")):
        sign = -1 if raw[0] == "-" else 1
        raw = raw[1:]
    nbytes = parse_size(raw, "delta")
    delta_regions = sign * mgr.ledger.spec.regions_for(nbytes)
    regions = mgr.resize_memory(args.id, delta_regions)
    _save(args, mgr)
    total = len(regions) * mgr.ledger.spec.region_bytes
    print(
        f"{args.id} regions now {len(regions)} ({total} bytes) "
        f"charged={_charged(mgr) if delta_regions else 0.0:.6f}s"
    )
    return 0


def cmd_log(args: argparse.Namespace) -> int:
    mgr = _load(args)
    for r in mgr.adjustment_log():
        print(
            f"t={r.time:.6f}s subos={r.subos} op={r.op.value} "
            f"{r.delta_str()} charged={r.charged:.6f}s"
        )
    if not mgr.log:
        print("no adjustments recorded")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    return run_file(args.scenario, args.out, seed_override=args.seed)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="rfm",
        description="Operate an emulated partitioned node: resource ledger, "
        "instance lifecycle with adjustment charges, and scenario runs.",
    )
    ap.add_argument("--state", help="node state file (default: $RFM_STATE or ./rfm-state.json)")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a fresh node state file")
    p.add_argument("--cores", type=int, required=True, help="total CPU cores on the node")
    p.add_argument("--memory", required=True, help="total memory, e.g. 32G")
    p.add_argument("--region-bytes", default="128M", help="hotplug granularity (default 128M)")
    p.add_argument("--supervisor-cores", type=int, default=1)
    p.add_argument("--supervisor-memory", default=None, help="default: two regions")
    p.add_argument("--devices", default=None, help="comma-separated passthrough device ids")
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("create", help="create an instance")
    p.add_argument("--cores", type=int, required=True)
    p.add_argument("--memory", required=True, help="e.g. 16G")
    p.add_argument("--devices", default=None)
    p.add_argument("--name", default=None)
    p.set_defaults(fn=cmd_create)

    p = sub.add_parser("destroy", help="destroy an instance and reclaim resources")
    p.add_argument("id")
    p.set_defaults(fn=cmd_destroy)

    p = sub.add_parser("resize-cpu", help="add or remove cores, e.g. +2 or -1")
    p.add_argument("id")
    p.add_argument("delta")
    p.set_defaults(fn=cmd_resize_cpu)

    p = sub.add_parser("resize-mem", help="add or remove memory, e.g. +1024M")
    p.add_argument("id")
    p.add_argument("delta")
    p.set_defaults(fn=cmd_resize_mem)

    p = sub.add_parser("log", help="print the adjustment log")
    p.set_defaults(fn=cmd_log)

    p = sub.add_parser("run", help="execute a scenario file")
    p.add_argument("--scenario", required=True, help="scenario JSON path")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    p.set_defaults(fn=cmd_run)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except IsoNodeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
