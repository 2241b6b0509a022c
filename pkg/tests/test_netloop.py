from __future__ import annotations

import itertools

import pytest

from isonode.errors import DuplicateMac, SpecViolation
from isonode.ledger import GiB, MiB, Ledger, NodeSpec
from isonode.netloop import BROADCAST_MAC, Frame, NetLoop, canonical_mac

MAC = {
    "a": "02:00:00:00:00:0a",
    "b": "02:00:00:00:00:0b",
    "c": "02:00:00:00:00:0c",
    "d": "02:00:00:00:00:0d",
}
EXTERNAL = "0e:11:22:33:44:55"


def make_loop(names=("a", "b")) -> NetLoop:
    spec = NodeSpec(total_cores=9, total_memory=4 * GiB, region_bytes=128 * MiB)
    led = Ledger(spec, supervisor_cores=1, supervisor_memory=256 * MiB)
    loop = NetLoop(led)
    for i, n in enumerate(names):
        led.allocate(n, cores=[i + 1])
        loop.register_mac(n, MAC[n])
    return loop


def test_canonical_mac():
    assert canonical_mac("02-AB-cd-00-11-22") == "02:ab:cd:00:11:22"
    with pytest.raises(SpecViolation):
        canonical_mac("not a mac")
    with pytest.raises(SpecViolation):
        canonical_mac("02:ab:cd:00:11")


def test_mac_registration_updates_shared_table():
    loop = make_loop(("a",))
    _, macs, version = loop.ledger.shared_snapshot()
    assert macs == {MAC["a"]: "a"}
    assert version == 1
    with pytest.raises(DuplicateMac):
        loop.register_mac("a", MAC["a"].upper())  # same mac, canonicalized
    loop.unregister_mac("a", MAC["a"])
    _, macs, version = loop.ledger.shared_snapshot()
    assert macs == {} and version == 2


def test_route_is_pure():
    loop = make_loop()
    r = loop.route(Frame(MAC["b"], MAC["a"], b"x"))
    assert r.kind == "loop" and r.dst == "b"
    assert loop.route(Frame(EXTERNAL, MAC["a"], b"x")).kind == "passthrough"
    assert loop.route(Frame(MAC["b"], MAC["a"], bytes(1501))).kind == "drop"


def test_registered_mac_never_passthrough():
    loop = make_loop()
    res = loop.inject(Frame(MAC["b"], MAC["a"], b"ping"))
    assert res.kind == "delivered" and res.dst == "b"
    assert loop.passthrough_sink == []
    got = loop.recv_batch("b")
    assert len(got) == 1 and got[0].payload == b"ping"


def test_unregistered_mac_passes_through():
    loop = make_loop()
    frame = Frame(EXTERNAL, MAC["a"], b"out")
    res = loop.inject(frame)
    assert res.kind == "passthrough"
    assert loop.passthrough_sink == [frame]


def test_delivered_frames_byte_identical():
    loop = make_loop()
    payload = bytes(range(256)) * 5  # 1280 bytes, under the MTU
    loop.inject(Frame(MAC["b"], MAC["a"], payload))
    got = loop.recv_batch("b")
    assert got[0].payload == payload and got[0].payload is not None
    assert got[0].src_mac == MAC["a"] and got[0].dst_mac == MAC["b"]


def test_oversize_frame_dropped():
    loop = make_loop()
    res = loop.inject(Frame(MAC["b"], MAC["a"], bytes(1501)))
    assert res.kind == "dropped" and res.reason == "oversize"
    assert loop.recv_batch("b") == []


def test_broadcast_excludes_sender():
    loop = make_loop(("a", "b", "c"))
    res = loop.inject(Frame(BROADCAST_MAC, MAC["a"], b"hello all"))
    assert res.kind == "delivered" and res.delivered == 2
    assert loop.recv_batch("a") == []
    for peer in ("b", "c"):
        got = loop.recv_batch(peer)
        assert [f.payload for f in got] == [b"hello all"]


def test_broadcast_from_external_reaches_everyone():
    loop = make_loop(("a", "b"))
    res = loop.inject(Frame(BROADCAST_MAC, EXTERNAL, b"wake"))
    assert res.delivered == 2


def test_ring_full_counts():
    loop = make_loop()
    loop._ensure("b")
    cap = loop._rings["b"].capacity
    for i in range(cap):
        assert loop.inject(Frame(MAC["b"], MAC["a"], b"x")).kind == "delivered"
    res = loop.inject(Frame(MAC["b"], MAC["a"], b"x"))
    assert res.kind == "ring-full"
    assert loop.ring_full["b"] == 1


def test_detach_drops_frames():
    loop = make_loop()
    loop.detach("b")
    res = loop.inject(Frame(MAC["b"], MAC["a"], b"x"))
    assert res.kind == "dropped" and res.reason == "peer-gone"


def test_doorbell_bound_on_netloop():
    loop = make_loop()
    for _ in range(50):
        loop.inject(Frame(MAC["b"], MAC["a"], b"x"))
    assert loop.doorbell_count("b") == 1
    loop.recv_batch("b", budget=64)
    gate = loop._gates["b"]
    assert gate.doorbells <= gate.to_empty + 1


def test_trace_rows_format():
    loop = make_loop()
    loop.inject(Frame(MAC["b"], MAC["a"], b"x"), at=1.25)
    rows = loop.trace_rows()
    assert rows == [("1.250000", MAC["a"], MAC["b"], "loop:b")]


def test_exhaustive_small_topologies():
    # Every (size, frame pattern) pair over <= 4 instances, <= 16 frames:
    # registered MACs never pass through, payloads survive byte-for-byte,
    # broadcast reaches everyone but the sender.
    names = ("a", "b", "c", "d")
    for size in range(1, 5):
        live = names[:size]
        dst_choices = [MAC[n] for n in live] + [EXTERNAL, BROADCAST_MAC]
        for src, dst in itertools.product(live, dst_choices):
            loop = make_loop(live)
            payloads = [bytes([i]) * (i + 1) for i in range(16)]
            for i, p in enumerate(payloads):
                loop.inject(Frame(dst, MAC[src], p), at=float(i))
            if dst == BROADCAST_MAC:
                for peer in live:
                    got = loop.recv_batch(peer, budget=32)
                    if peer == src:
                        assert got == []
                    else:
                        assert [f.payload for f in got] == payloads
            elif dst == EXTERNAL:
                assert [f.payload for f in loop.passthrough_sink] == payloads
                for peer in live:
                    assert loop.recv_batch(peer, budget=32) == []
            else:
                owner = next(n for n in live if MAC[n] == dst)
                got = loop.recv_batch(owner, budget=32)
                assert [f.payload for f in got] == payloads
                assert loop.passthrough_sink == []
