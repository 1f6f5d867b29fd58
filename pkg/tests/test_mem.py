import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import stack_lru_misses
from simfidelity.config import CacheGeometry, ConfigError, MachineConfig
from simfidelity.mem import MSI, Event, MemoryHierarchy, ProtocolError, msi_transition

KiB = 1024


def machine(n_cores=1, l1=None, l2=None, **mem):
    cfg = MachineConfig(n_cores=n_cores)
    if l1 is not None:
        cfg.memory.l1d = l1
    if l2 is not None:
        cfg.memory.l2 = l2
    for k, v in mem.items():
        setattr(cfg.memory, k, v)
    return cfg.validate()


# --- geometry -------------------------------------------------------------------------------

def test_base_l1_geometry():
    g = MachineConfig().memory.l1d
    assert g.sets == 128
    # index bits [6..12]: addresses 8 KiB apart share a set
    mh = MemoryHierarchy(machine())
    for i in range(4):
        mh.access(0, "load", i * 8 * KiB, now=1000 * i)
    assert mh.l1_state(0, "load", 0) == MSI.S
    mh.access(0, "load", 4 * 8 * KiB, now=10000)
    assert mh.l1_state(0, "load", 0) == MSI.I


def test_geometry_validation():
    with pytest.raises(ConfigError, match="memory.l1d.ways"):
        MachineConfig.from_dict({"memory": {"l1d": {"size_bytes": 32768, "ways": 3}}})


# --- latency ledger -------------------------------------------------------------------------

def test_cold_access_misses():
    mh = MemoryHierarchy(machine())
    r = mh.l1_access(0, "load", 0x1234_0000)
    assert not r.hit and r.latency > 1


def test_latency_ledger_unloaded():
    mh = MemoryHierarchy(machine())
    assert mh.access(0, "load", 0x10000, now=0) == 132
    assert mh.access(0, "load", 0x10000, now=1000) == 1
    # push the line out of its 4-way L1 set; it stays in L2
    for i in range(1, 5):
        mh.access(0, "load", 0x10000 + i * 8 * KiB, now=1000 * (i + 1))
    assert mh.access(0, "load", 0x10000, now=10000) == 12


def test_l2_hit_internal_latency():
    mh = MemoryHierarchy(machine())
    mh.access(0, "load", 0x40, now=0)
    r = mh.l2_access(0, 0x40, now=1000)
    # tag 1 + data 8 + return transit 1
    assert r.hit and r.latency == 10


def test_blocking_l1_stalls_second_request():
    mh = MemoryHierarchy(machine())
    r = mh.l1_access(0, "load", 0x40, now=0)
    assert mh.l1_access(0, "load", 0x80, now=5).stall
    assert not mh.l1_access(0, "load", 0x80, now=r.latency).stall


def test_dram_slots():
    mh = MemoryHierarchy(machine())
    assert mh.dram_access(0) == 120
    assert mh.dram_access(0) == 130


def test_dram_queue_bound():
    mh = MemoryHierarchy(machine())
    done = [mh.dram_access(0) for _ in range(12)]
    assert all(d is not None for d in done)
    assert mh.dram_access(0) is None


def test_dram_slot_from_bandwidth():
    assert MachineConfig().dram_slot_cycles == 10


def test_l2_mshr_bound():
    mh = MemoryHierarchy(machine())
    for i in range(8):
        assert not mh.l2_access(0, i * 64, now=0).retry
    assert mh.l2_access(0, 8 * 64, now=0).retry


# --- MSI ------------------------------------------------------------------------------------

@pytest.mark.parametrize("state,event,new,actions", [
    (MSI.I, Event.CoreRead, MSI.S, {"fetch"}),
    (MSI.I, Event.CoreWrite, MSI.M, {"fetch_exclusive", "invalidate_others"}),
    (MSI.S, Event.CoreRead, MSI.S, set()),
    (MSI.S, Event.CoreWrite, MSI.M, {"upgrade", "invalidate_others"}),
    (MSI.S, Event.RemoteRead, MSI.S, set()),
    (MSI.S, Event.RemoteWrite, MSI.I, set()),
    (MSI.S, Event.Evict, MSI.I, set()),
    (MSI.M, Event.CoreRead, MSI.M, set()),
    (MSI.M, Event.CoreWrite, MSI.M, set()),
    (MSI.M, Event.RemoteRead, MSI.S, {"writeback"}),
    (MSI.M, Event.RemoteWrite, MSI.I, {"writeback"}),
    (MSI.M, Event.Evict, MSI.I, {"writeback"}),
])
def test_msi_table(state, event, new, actions):
    assert msi_transition(state, event) == (new, frozenset(actions))


@pytest.mark.parametrize("event", [Event.RemoteRead, Event.RemoteWrite, Event.Evict])
def test_msi_illegal_on_invalid(event):
    with pytest.raises(ProtocolError):
        msi_transition(MSI.I, event)


def test_remote_read_downgrades_owner():
    mh = MemoryHierarchy(machine(n_cores=2))
    mh.access(0, "store", 0x80, now=0)
    assert mh.l1_state(0, "load", 0x80) == MSI.M
    mh.access(1, "load", 0x80, now=1000)
    assert mh.l1_state(0, "load", 0x80) == MSI.S
    assert mh.l1_state(1, "load", 0x80) == MSI.S
    mh.check_invariants()


def test_remote_write_invalidates_sharers():
    mh = MemoryHierarchy(machine(n_cores=3))
    mh.access(0, "load", 0x80, now=0)
    mh.access(1, "load", 0x80, now=1000)
    mh.access(2, "store", 0x80, now=2000)
    assert [mh.l1_state(c, "load", 0x80) for c in range(3)] == [MSI.I, MSI.I, MSI.M]
    mh.check_invariants()


def test_store_to_shared_line_upgrades():
    mh = MemoryHierarchy(machine(n_cores=2))
    mh.access(0, "load", 0x80, now=0)
    mh.access(1, "load", 0x80, now=1000)
    lat = mh.access(0, "store", 0x80, now=2000)
    assert mh.l1_state(0, "load", 0x80) == MSI.M
    assert mh.l1_state(1, "load", 0x80) == MSI.I
    assert mh.counters(0)["l1d_upgrades"] == 1 and mh.counters(0)["l1d_misses"] == 1
    # upgrade goes through the directory and invalidates a remote copy
    assert lat == 12 + 2


def test_back_invalidation_keeps_inclusion():
    # 2-way, 1-set L2: a third line evicts a line still held in L1
    mh = MemoryHierarchy(machine(l2=CacheGeometry(128, 2)))
    for i, a in enumerate([0x0, 0x40, 0x80]):
        mh.access(0, "load", a, now=1000 * i)
    assert not mh.in_l2(0x0)
    assert mh.l1_state(0, "load", 0x0) == MSI.I
    mh.check_invariants()


# --- stack-algorithm oracle -----------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(st.sampled_from([1, 2, 8, 32, 64]), st.sampled_from([1, 2, 4, 8]), st.integers(0, 2**32 - 1))
def test_l1_lru_matches_stack_oracle(sets, ways, seed):
    rng = np.random.default_rng(seed)
    n_lines = int(rng.integers(sets * ways // 2 + 1, 4 * sets * ways + 2))
    lines = rng.integers(0, n_lines, 2000)
    stores = rng.random(2000) < 0.3
    mh = MemoryHierarchy(machine(l1=CacheGeometry(sets * ways * 64, ways)))
    for t, (line, store) in enumerate(zip(lines.tolist(), stores.tolist())):
        mh.access(0, "store" if store else "load", line * 64, now=200 * t)
    assert mh.counters(0)["l1d_misses"] == stack_lru_misses(lines.tolist(), sets, ways)


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([1, 4, 16, 64]), st.sampled_from([2, 4, 8]), st.integers(0, 2**32 - 1))
def test_l2_lru_matches_stack_oracle(sets, ways, seed):
    # a one-line L1 forwards every new line to L2, and the line it holds is
    # always L2's most recent one, so back-invalidation never disturbs the stream
    rng = np.random.default_rng(seed)
    lines = rng.integers(0, 3 * sets * ways, 2000).tolist()
    mh = MemoryHierarchy(machine(l1=CacheGeometry(64, 1), l2=CacheGeometry(sets * ways * 64, ways)))
    for t, line in enumerate(lines):
        mh.access(0, "load", line * 64, now=500 * t)
    assert mh.counters(0)["l2_misses"] == stack_lru_misses(lines, sets, ways)


def test_lru_thrash_five_lines_four_ways():
    mh = MemoryHierarchy(machine())
    lines = [i * 128 for i in range(5)] * 20
    for t, line in enumerate(lines):
        mh.access(0, "load", line * 64, now=200 * t)
    assert mh.counters(0)["l1d_misses"] == len(lines)


# --- randomized coherence stress ------------------------------------------------------------

@settings(max_examples=20, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**32 - 1))
def test_random_interleavings_keep_invariants(n_cores, seed):
    rng = np.random.default_rng(seed)
    cfg = machine(n_cores=n_cores, l1=CacheGeometry(512, 2), l2=CacheGeometry(2048, 4))
    cfg.memory.l1i = CacheGeometry(512, 2)
    mh = MemoryHierarchy(cfg)
    for t in range(400):
        core = int(rng.integers(n_cores))
        kind = ("ifetch", "load", "store")[int(rng.integers(3))]
        mh.access(core, kind, int(rng.integers(0, 48)) * 64, now=t * 300)
        mh.check_invariants()
    bal = mh.residency_balance()
    assert bal["l1_expected"] == bal["l1_resident"]
    assert bal["l2_expected"] == bal["l2_resident"]


def test_ideal_memory_always_hits():
    mh = MemoryHierarchy(machine(ideal=True))
    assert {mh.access(0, "load", a * 4096, now=a) for a in range(100)} == {1}
