from __future__ import annotations

import pytest

from isonode.ledger import GiB, MiB, Ledger, NodeSpec
from isonode.lifecycle import new_node


@pytest.fixture
def spec13() -> NodeSpec:
    """13 cores: one for the supervisor, 12 allocatable. 36 GiB in 128 MiB regions."""
    return NodeSpec(total_cores=13, total_memory=36 * GiB, region_bytes=128 * MiB)


@pytest.fixture
def ledger13(spec13) -> Ledger:
    return Ledger(spec13, supervisor_cores=1, supervisor_memory=256 * MiB)


@pytest.fixture
def mgr13(spec13):
    return new_node(spec13, supervisor_cores=1, supervisor_memory=256 * MiB)


@pytest.fixture
def consolidated(mgr13):
    """The two-instance layout: svc and batch at 6 cores + 16 GiB each."""
    mgr13.create_subos(6, 16 * GiB, name="svc")
    mgr13.create_subos(6, 16 * GiB, name="batch")
    return mgr13
