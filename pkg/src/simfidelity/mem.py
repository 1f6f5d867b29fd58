"""Private blocking L1 I/D caches, a shared inclusive MSI L2 directory, and slotted DRAM.

Timing follows an atomic-transaction model: an access is resolved completely
at the cycle it is issued (requests reach the hierarchy in global cycle
order, cores within a cycle in index order), and its latency comes from the
occupancy of the shared resources at that moment:

* L1 hit: ``l1_hit_latency``.
* L1 miss: the request reaches L2 after ``l1_hit_latency + transit_latency``.
  The L2 tag port accepts one request per cycle and an L2 MSHR must be free
  (otherwise the request waits for the earliest one).  A hit returns after
  ``tag + data + transit`` (12 cycles end to end with the defaults).
* L2 miss: DRAM is issued after the tag check; it completes at
  ``max(issue + dram_latency, previous_completion + slot)`` where the slot is
  one 64-byte line at the peak bandwidth (10 cycles at 12.8 GB/s and 2 GHz),
  with at most ``dram_max_inflight`` requests outstanding.  The fill then
  streams through the data array and back (132 cycles unloaded).
* Downgrading or invalidating another core's copy adds ``coherence_latency``.

Dirty L2 victims take a DRAM slot but do not delay the requester.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from numba import njit

from ._struct import build, define_struct

from . import repl
from .config import MachineConfig

# MSI states of an L1 line
I, S, M = 0, 1, 2

# protocol events
CORE_READ, CORE_WRITE, REMOTE_READ, REMOTE_WRITE, EVICT = range(5)

# protocol actions (bit set)
ACT_FETCH = 1
ACT_FETCH_EXCL = 2
ACT_UPGRADE = 4
ACT_INVALIDATE_OTHERS = 8
ACT_WRITEBACK = 16

# access kinds
IFETCH, LOAD, STORE = 0, 1, 2

# per-core counters
C_L1I_ACC, C_L1I_MISS, C_L1D_ACC, C_L1D_MISS, C_L1D_UPG = 0, 1, 2, 3, 4
C_L2_ACC, C_L2_MISS, C_COH, C_LAT_SUM = 5, 6, 7, 8
N_CORE_CTR = 9

# global counters
G_L1_FILL, G_L1_EVICT, G_L1_BACKINV, G_L1_COHINV = 0, 1, 2, 3
G_L2_FILL, G_L2_EVICT, G_DRAM_REQ, G_DRAM_WB = 4, 5, 6, 7
N_GLOBAL_CTR = 8

# parameter slots
(P_LINE_SHIFT, P_L1_LAT, P_TRANSIT, P_L2_TAG, P_L2_DATA, P_DRAM_LAT, P_DRAM_SLOT, P_COH,
 P_IDEAL, P_POLICY, P_PSEL_MAX, P_PSEL_MSB, P_EPS_THR, P_N_CORES, P_L2_SETS, P_L2_WAYS) = range(16)
N_PARAMS = 16

MemState = define_struct("MemState", [
    "p",
    "l1_sets", "l1_ways", "l1_tag", "l1_st", "l1_rank",
    "l2_tag", "l2_sharers", "l2_owner", "l2_dirty",
    "rank", "mru", "rrpv", "leader", "psel", "rng",
    "mshr", "l2_port", "dram_q", "dram_last",
    "fetch_line", "ctr", "gctr",
], __name__)


class ProtocolError(RuntimeError):
    pass


# --- protocol -----------------------------------------------------------------

@njit(cache=True)
def msi_next_k(state, event):
    """(new_state, actions) for one L1 line; new_state -1 marks an illegal pair."""
    if state == I:
        if event == CORE_READ:
            return S, ACT_FETCH
        if event == CORE_WRITE:
            return M, ACT_FETCH_EXCL | ACT_INVALIDATE_OTHERS
        return -1, 0
    if state == S:
        if event == CORE_READ or event == REMOTE_READ:
            return S, 0
        if event == CORE_WRITE:
            return M, ACT_UPGRADE | ACT_INVALIDATE_OTHERS
        return I, 0
    if event == CORE_READ or event == CORE_WRITE:
        return M, 0
    if event == REMOTE_READ:
        return S, ACT_WRITEBACK
    return I, ACT_WRITEBACK


class MSI(enum.IntEnum):
    I = I
    S = S
    M = M


class Event(enum.IntEnum):
    CoreRead = CORE_READ
    CoreWrite = CORE_WRITE
    RemoteRead = REMOTE_READ
    RemoteWrite = REMOTE_WRITE
    Evict = EVICT


_ACTION_NAMES = {ACT_FETCH: "fetch", ACT_FETCH_EXCL: "fetch_exclusive", ACT_UPGRADE: "upgrade",
                 ACT_INVALIDATE_OTHERS: "invalidate_others", ACT_WRITEBACK: "writeback"}


def msi_transition(state, event):
    """Return ``(new_state, actions)``; raises ProtocolError on an illegal pair."""
    new, act = msi_next_k(int(state), int(event))
    if new < 0:
        raise ProtocolError(f"illegal event {Event(event).name} for line in state {MSI(state).name}")
    return MSI(new), frozenset(name for bit, name in _ACTION_NAMES.items() if act & bit)


# --- DRAM and L2 port scheduling ----------------------------------------------

@njit(cache=True)
def dram_schedule_k(ms, issue):
    """Book one line transfer issued at ``issue``; returns its completion cycle."""
    q = ms.dram_q
    k = 0
    for j in range(1, q.shape[0]):
        if q[j] < q[k]:
            k = j
    if q[k] > issue:
        issue = q[k]
    done = issue + ms.p[P_DRAM_LAT]
    slot_done = ms.dram_last[0] + ms.p[P_DRAM_SLOT]
    if slot_done > done:
        done = slot_done
    ms.dram_last[0] = done
    q[k] = done
    ms.gctr[G_DRAM_REQ] += 1
    return done


@njit(cache=True)
def l2_start_k(ms, arrival):
    """Cycle the L2 starts a request arriving at ``arrival``, and the MSHR slot it takes."""
    start = arrival
    if ms.l2_port[0] > start:
        start = ms.l2_port[0]
    k = 0
    for j in range(1, ms.mshr.shape[0]):
        if ms.mshr[j] < ms.mshr[k]:
            k = j
    if ms.mshr[k] > start:
        start = ms.mshr[k]
    ms.l2_port[0] = start + 1
    return start, k


# --- L1 helpers ----------------------------------------------------------------

@njit(cache=True)
def l1_find_k(ms, cid, line):
    s = line & (ms.l1_sets[cid] - 1)
    for w in range(ms.l1_ways[cid]):
        if ms.l1_tag[cid, s, w] == line and ms.l1_st[cid, s, w] != I:
            return w
    return -1


@njit(cache=True)
def l1_drop_k(ms, cid, line, w):
    """Invalidate way ``w`` of ``line`` in cache ``cid`` (no directory update)."""
    s = line & (ms.l1_sets[cid] - 1)
    ms.l1_st[cid, s, w] = I
    ms.l1_tag[cid, s, w] = -1
    if cid % 2 == 0 and ms.fetch_line[cid // 2] == line:
        ms.fetch_line[cid // 2] = -1


@njit(cache=True)
def l2_find_k(ms, line):
    s = line & (ms.p[P_L2_SETS] - 1)
    for w in range(ms.p[P_L2_WAYS]):
        if ms.l2_tag[s, w] == line:
            return w
    return -1


@njit(cache=True)
def remote_event_k(ms, cid, line, event):
    """Apply a remote read/write to ``cid``'s copy; returns True if it held it in M."""
    w = l1_find_k(ms, cid, line)
    if w < 0:
        return False
    s = line & (ms.l1_sets[cid] - 1)
    old = ms.l1_st[cid, s, w]
    new, act = msi_next_k(old, event)
    if new == I:
        l1_drop_k(ms, cid, line, w)
        ms.gctr[G_L1_COHINV] += 1
    else:
        ms.l1_st[cid, s, w] = new
    return (act & ACT_WRITEBACK) != 0


@njit(cache=True)
def l1_evict_k(ms, cid, s, w):
    """Evict a valid L1 way, notifying the directory."""
    line = ms.l1_tag[cid, s, w]
    _, act = msi_next_k(ms.l1_st[cid, s, w], EVICT)
    l1_drop_k(ms, cid, line, w)
    ms.gctr[G_L1_EVICT] += 1
    w2 = l2_find_k(ms, line)
    s2 = line & (ms.p[P_L2_SETS] - 1)
    ms.l2_sharers[s2, w2] &= ~(np.int64(1) << cid)
    if act & ACT_WRITEBACK:
        ms.l2_dirty[s2, w2] = 1
        ms.l2_owner[s2, w2] = -1


# --- L2 -------------------------------------------------------------------------

@njit(cache=True)
def l2_request_k(ms, core, cid, line, write, arrival):
    """Serve an L1 miss or upgrade at the directory; returns the completion cycle."""
    p = ms.p
    start, slot = l2_start_k(ms, arrival)
    ms.ctr[core, C_L2_ACC] += 1
    s2 = line & (p[P_L2_SETS] - 1)
    w2 = l2_find_k(ms, line)
    bit = np.int64(1) << cid
    coh = False
    if w2 >= 0:
        repl.on_hit_k(p[P_POLICY], ms.rank, ms.mru, ms.rrpv, s2, w2)
        others = ms.l2_sharers[s2, w2] & ~bit
        if others != 0:
            event = REMOTE_WRITE if write else REMOTE_READ
            for c in range(ms.l1_sets.shape[0]):
                if (others >> c) & 1:
                    if write or ms.l2_owner[s2, w2] == c:
                        coh = True
                    if remote_event_k(ms, c, line, event):
                        ms.l2_dirty[s2, w2] = 1
                    if write:
                        ms.l2_sharers[s2, w2] &= ~(np.int64(1) << c)
            if not write:
                ms.l2_owner[s2, w2] = -1
        done = start + p[P_L2_TAG] + p[P_L2_DATA] + p[P_TRANSIT]
    else:
        ms.ctr[core, C_L2_MISS] += 1
        repl.on_miss_k(p[P_POLICY], ms.leader, ms.psel, p[P_PSEL_MAX], s2, core)
        w2 = -1
        for w in range(p[P_L2_WAYS]):
            if ms.l2_tag[s2, w] < 0:
                w2 = w
                break
        if w2 < 0:
            w2 = repl.victim_k(p[P_POLICY], ms.rank, ms.mru, ms.rrpv, s2)
            victim = ms.l2_tag[s2, w2]
            dirty = ms.l2_dirty[s2, w2] != 0
            sh = ms.l2_sharers[s2, w2]
            for c in range(ms.l1_sets.shape[0]):
                if (sh >> c) & 1:
                    wv = l1_find_k(ms, c, victim)
                    sv = victim & (ms.l1_sets[c] - 1)
                    if ms.l1_st[c, sv, wv] == M:
                        dirty = True
                    l1_drop_k(ms, c, victim, wv)
                    ms.gctr[G_L1_BACKINV] += 1
            ms.gctr[G_L2_EVICT] += 1
            if dirty:
                dram_schedule_k(ms, start + p[P_L2_TAG])
                ms.gctr[G_DRAM_WB] += 1
        dram_done = dram_schedule_k(ms, start + p[P_L2_TAG])
        ms.l2_tag[s2, w2] = line
        ms.l2_sharers[s2, w2] = 0
        ms.l2_owner[s2, w2] = -1
        ms.l2_dirty[s2, w2] = 0
        ms.gctr[G_L2_FILL] += 1
        repl.on_fill_k(p[P_POLICY], ms.rank, ms.mru, ms.rrpv, ms.leader, ms.psel, p[P_PSEL_MSB],
                       ms.rng, p[P_EPS_THR], s2, w2, core)
        done = dram_done + p[P_L2_DATA] + p[P_TRANSIT]
    ms.l2_sharers[s2, w2] |= bit
    if write:
        ms.l2_sharers[s2, w2] = bit
        ms.l2_owner[s2, w2] = cid
    if coh:
        done += p[P_COH]
        ms.ctr[core, C_COH] += 1
    ms.mshr[slot] = done
    return done


# --- top-level access -------------------------------------------------------------

@njit(cache=True)
def access_k(ms, core, kind, addr, now):
    """One core memory access issued at cycle ``now``; returns its latency in cycles."""
    p = ms.p
    line = addr >> p[P_LINE_SHIFT]
    if kind == IFETCH:
        if ms.fetch_line[core] == line:
            return p[P_L1_LAT]
        ms.fetch_line[core] = line
        cid = 2 * core
        ms.ctr[core, C_L1I_ACC] += 1
    else:
        cid = 2 * core + 1
        ms.ctr[core, C_L1D_ACC] += 1
    if p[P_IDEAL] != 0:
        return p[P_L1_LAT]
    write = kind == STORE
    event = CORE_WRITE if write else CORE_READ
    s = line & (ms.l1_sets[cid] - 1)
    w = l1_find_k(ms, cid, line)
    if w >= 0:
        new, act = msi_next_k(ms.l1_st[cid, s, w], event)
        repl.lru_touch_k(ms.l1_rank[cid, s, :ms.l1_ways[cid]], w)
        if act == 0:
            return p[P_L1_LAT]
        # store to a shared line: upgrade through the directory
        ms.ctr[core, C_L1D_UPG] += 1
        done = l2_request_k(ms, core, cid, line, True, now + p[P_L1_LAT] + p[P_TRANSIT])
        ms.l1_st[cid, s, w] = new
        lat = done - now
        ms.ctr[core, C_LAT_SUM] += lat
        return lat
    if kind == IFETCH:
        ms.ctr[core, C_L1I_MISS] += 1
    else:
        ms.ctr[core, C_L1D_MISS] += 1
    ways = ms.l1_ways[cid]
    w = -1
    for j in range(ways):
        if ms.l1_st[cid, s, j] == I:
            w = j
            break
    if w < 0:
        w = repl.lru_victim_k(ms.l1_rank[cid, s, :ways])
        l1_evict_k(ms, cid, s, w)
    done = l2_request_k(ms, core, cid, line, write, now + p[P_L1_LAT] + p[P_TRANSIT])
    new, _ = msi_next_k(I, event)
    ms.l1_tag[cid, s, w] = line
    ms.l1_st[cid, s, w] = new
    ms.gctr[G_L1_FILL] += 1
    repl.lru_touch_k(ms.l1_rank[cid, s, :ways], w)
    lat = done - now
    ms.ctr[core, C_LAT_SUM] += lat
    return lat


# --- invariants -------------------------------------------------------------------

INV_OK, INV_INCLUSION, INV_SHARER_BIT, INV_MULTI_M, INV_M_AND_S, INV_OWNER = 0, 1, 2, 3, 4, 5
INVARIANT_NAMES = {INV_INCLUSION: "inclusion", INV_SHARER_BIT: "directory sharer bit",
                   INV_MULTI_M: "single M holder", INV_M_AND_S: "no M+S coexistence",
                   INV_OWNER: "directory owner"}


@njit(cache=True)
def check_invariants_k(ms):
    n_cid = ms.l1_sets.shape[0]
    for cid in range(n_cid):
        for s in range(ms.l1_sets[cid]):
            for w in range(ms.l1_ways[cid]):
                st = ms.l1_st[cid, s, w]
                if st == I:
                    continue
                line = ms.l1_tag[cid, s, w]
                w2 = l2_find_k(ms, line)
                if w2 < 0:
                    return INV_INCLUSION
                s2 = line & (ms.p[P_L2_SETS] - 1)
                if ((ms.l2_sharers[s2, w2] >> cid) & 1) == 0:
                    return INV_SHARER_BIT
                if st == M:
                    if ms.l2_owner[s2, w2] != cid:
                        return INV_OWNER
                    for c in range(n_cid):
                        if c != cid and l1_find_k(ms, c, line) >= 0:
                            other = ms.l1_st[c, line & (ms.l1_sets[c] - 1), l1_find_k(ms, c, line)]
                            return INV_MULTI_M if other == M else INV_M_AND_S
    for s2 in range(ms.p[P_L2_SETS]):
        for w2 in range(ms.p[P_L2_WAYS]):
            sh = ms.l2_sharers[s2, w2]
            if sh == 0:
                continue
            line = ms.l2_tag[s2, w2]
            for c in range(n_cid):
                if (sh >> c) & 1 and l1_find_k(ms, c, line) < 0:
                    return INV_SHARER_BIT
    return INV_OK


@njit(cache=True)
def l1_resident_k(ms):
    n = 0
    for cid in range(ms.l1_sets.shape[0]):
        for s in range(ms.l1_sets[cid]):
            for w in range(ms.l1_ways[cid]):
                if ms.l1_st[cid, s, w] != I:
                    n += 1
    return n


# --- construction ---------------------------------------------------------------

def new_mem_state(config: MachineConfig, seed: int = 0) -> MemState:
    cfg = config.memory
    n = config.n_cores
    rc = config.replacement
    policy = repl.POLICY_IDS[rc.policy]
    p = np.zeros(N_PARAMS, dtype=np.int64)
    p[P_LINE_SHIFT] = cfg.l2.line_bytes.bit_length() - 1
    p[P_L1_LAT] = cfg.l1_hit_latency
    p[P_TRANSIT] = cfg.transit_latency
    p[P_L2_TAG] = cfg.l2_tag_latency
    p[P_L2_DATA] = cfg.l2_data_latency
    p[P_DRAM_LAT] = cfg.dram_latency
    p[P_DRAM_SLOT] = config.dram_slot_cycles
    p[P_COH] = cfg.coherence_latency
    p[P_IDEAL] = int(cfg.ideal)
    p[P_POLICY] = policy
    p[P_PSEL_MAX] = (1 << rc.psel_bits) - 1
    p[P_PSEL_MSB] = 1 << (rc.psel_bits - 1)
    p[P_EPS_THR] = repl.epsilon_threshold(rc.epsilon)
    p[P_N_CORES] = n
    p[P_L2_SETS] = cfg.l2.sets
    p[P_L2_WAYS] = cfg.l2.ways

    geoms = [cfg.l1i, cfg.l1d] * n
    max_sets = max(g.sets for g in geoms)
    max_ways = max(g.ways for g in geoms)
    l1_rank = np.zeros((2 * n, max_sets, max_ways), dtype=np.int16)
    for cid, g in enumerate(geoms):
        l1_rank[cid, :g.sets, :g.ways] = repl.lru_init(g.sets, g.ways)

    s2, w2 = cfg.l2.sets, cfg.l2.ways
    if policy == repl.POLICY_LRU:
        leader = np.full(s2, repl.FOLLOWER, dtype=np.int32)
    else:
        leader = repl.assign_leader_sets(s2, rc.sdms_per_core * n, rc.sets_per_sdm, rc.leader_scheme)
    return build(MemState,
        p=p,
        l1_sets=np.array([g.sets for g in geoms], dtype=np.int64),
        l1_ways=np.array([g.ways for g in geoms], dtype=np.int64),
        l1_tag=np.full((2 * n, max_sets, max_ways), -1, dtype=np.int64),
        l1_st=np.zeros((2 * n, max_sets, max_ways), dtype=np.int8),
        l1_rank=l1_rank,
        l2_tag=np.full((s2, w2), -1, dtype=np.int64),
        l2_sharers=np.zeros((s2, w2), dtype=np.int64),
        l2_owner=np.full((s2, w2), -1, dtype=np.int16),
        l2_dirty=np.zeros((s2, w2), dtype=np.int8),
        rank=repl.lru_init(s2, w2),
        mru=np.zeros((s2, w2), dtype=np.int8),
        rrpv=np.full((s2, w2), repl.RRPV_MAX, dtype=np.int8),
        leader=leader,
        psel=np.full(n, 1 << (rc.psel_bits - 1), dtype=np.int32),
        rng=repl.seed_state(seed),
        mshr=np.zeros(cfg.l2_mshrs, dtype=np.int64),
        l2_port=np.zeros(1, dtype=np.int64),
        dram_q=np.zeros(cfg.dram_max_inflight, dtype=np.int64),
        dram_last=np.full(1, -(1 << 40), dtype=np.int64),
        fetch_line=np.full(n, -1, dtype=np.int64),
        ctr=np.zeros((n, N_CORE_CTR), dtype=np.int64),
        gctr=np.zeros(N_GLOBAL_CTR, dtype=np.int64),
    )


@dataclass
class Response:
    hit: bool = False
    latency: int = 0
    retry: bool = False
    stall: bool = False


_KINDS = {"ifetch": IFETCH, "load": LOAD, "store": STORE}


class MemoryHierarchy:
    """Python-facing wrapper around one ``MemState``."""

    def __init__(self, config: MachineConfig, seed: int = 0):
        self.config = config
        self.state = new_mem_state(config, seed)
        self._l1_busy = np.zeros(2 * config.n_cores, dtype=np.int64)

    @property
    def line_shift(self) -> int:
        return int(self.state.p[P_LINE_SHIFT])

    def access(self, core: int, kind, addr: int, now: int = 0) -> int:
        """Perform an access and return its end-to-end latency."""
        k = _KINDS[kind] if isinstance(kind, str) else int(kind)
        return int(access_k(self.state, core, k, addr, now))

    def l1_access(self, core: int, kind, addr: int, now: int = 0) -> Response:
        """Blocking L1 port: a second request before the first completes stalls."""
        k = _KINDS[kind] if isinstance(kind, str) else int(kind)
        cid = 2 * core + (0 if k == IFETCH else 1)
        if now < self._l1_busy[cid]:
            return Response(stall=True)
        if k == IFETCH:
            # the fetch-line buffer is a core-side optimisation; bypass it here
            self.state.fetch_line[core] = -1
        lat = int(access_k(self.state, core, k, addr, now))
        self._l1_busy[cid] = now + lat
        return Response(hit=lat == self.state.p[P_L1_LAT], latency=lat)

    def l2_access(self, core: int, addr: int, write: bool = False, now: int = 0, kind=None) -> Response:
        """Send a request straight to L2 (as an L1 data miss would); retry if all MSHRs are busy."""
        if np.count_nonzero(self.state.mshr > now) >= self.state.mshr.shape[0]:
            return Response(retry=True)
        line = addr >> self.line_shift
        cid = 2 * core + (0 if kind == "ifetch" else 1)
        hit = l2_find_k(self.state, line) >= 0
        done = int(l2_request_k(self.state, core, cid, line, bool(write), now))
        return Response(hit=hit, latency=done - now)

    def dram_access(self, now: int):
        """Book a DRAM transfer; returns the completion cycle or None when the queue is full."""
        if np.count_nonzero(self.state.dram_q > now) >= self.state.dram_q.shape[0]:
            return None
        return int(dram_schedule_k(self.state, now))

    def l1_state(self, core: int, kind, addr: int) -> MSI:
        k = _KINDS[kind] if isinstance(kind, str) else int(kind)
        cid = 2 * core + (0 if k == IFETCH else 1)
        line = addr >> self.line_shift
        w = l1_find_k(self.state, cid, line)
        if w < 0:
            return MSI.I
        return MSI(int(self.state.l1_st[cid, line & (self.state.l1_sets[cid] - 1), w]))

    def in_l2(self, addr: int) -> bool:
        return l2_find_k(self.state, addr >> self.line_shift) >= 0

    def check_invariants(self) -> None:
        code = int(check_invariants_k(self.state))
        if code != INV_OK:
            raise ProtocolError(f"invariant violated: {INVARIANT_NAMES[code]}")

    def counters(self, core: int) -> dict:
        c = self.state.ctr[core]
        return {
            "l1i_accesses": int(c[C_L1I_ACC]), "l1i_misses": int(c[C_L1I_MISS]),
            "l1d_accesses": int(c[C_L1D_ACC]), "l1d_misses": int(c[C_L1D_MISS]),
            "l1d_upgrades": int(c[C_L1D_UPG]), "l2_accesses": int(c[C_L2_ACC]),
            "l2_misses": int(c[C_L2_MISS]), "coherence_interventions": int(c[C_COH]),
        }

    def residency_balance(self) -> dict:
        """Fill/evict bookkeeping next to the actual number of resident lines."""
        g = self.state.gctr
        return {
            "l1_expected": int(g[G_L1_FILL] - g[G_L1_EVICT] - g[G_L1_BACKINV] - g[G_L1_COHINV]),
            "l1_resident": int(l1_resident_k(self.state)),
            "l2_expected": int(g[G_L2_FILL] - g[G_L2_EVICT]),
            "l2_resident": int(np.count_nonzero(self.state.l2_tag >= 0)),
        }
