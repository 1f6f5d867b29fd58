"""Deterministic synthetic workload generators.

Every generator is a pure function of its arguments.  Randomness comes from a
``numpy.random.Generator`` seeded with the caller's seed, so identical
arguments give bit-identical traces.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .trace import Kind, Trace, TraceError, Workload, WorkloadKind

LINE_BYTES = 64
CODE_BASE = 0x400000

# Pointer chase interleaves this many Alu ops after every Load.
POINTER_ALU_PER_LOAD = 3
# Stream triad per element: Load A, Load B, Alu, Alu, Store C.
TRIAD_ALU_PER_ELEM = 2
# Alu padding between consecutive branches of a synthetic pattern.
BRANCH_PAD = 4


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


def _loop_pcs(n: int, body: int, base: int = CODE_BASE) -> np.ndarray:
    return base + 4 * (np.arange(n, dtype=np.int64) % body)


def gen_pointer_chase(seed: int, buffer_bytes: int, n_instrs: int, base: int = 0) -> Trace:
    """Random cacheline-aligned loads inside ``buffer_bytes``, 3 Alu per Load."""
    if buffer_bytes < LINE_BYTES:
        raise TraceError(f"buffer_bytes={buffer_bytes} is smaller than a {LINE_BYTES}B cache line")
    if not _is_pow2(buffer_bytes):
        raise TraceError(f"buffer_bytes={buffer_bytes} is not a power of two")
    if n_instrs <= 0:
        raise TraceError("n_instrs must be positive")
    rng = np.random.default_rng(seed)
    period = POINTER_ALU_PER_LOAD + 1
    pos = np.arange(n_instrs) % period
    kind = np.where(pos == 0, Kind.LOAD, Kind.ALU).astype(np.int8)
    n_loads = int(np.count_nonzero(pos == 0))
    addr = np.zeros(n_instrs, dtype=np.int64)
    addr[pos == 0] = base + rng.integers(0, buffer_bytes // LINE_BYTES, size=n_loads) * LINE_BYTES
    return Trace(kind=kind, pc=_loop_pcs(n_instrs, period), addr=addr)


def triad_layout(elem_count: int, elem_bytes: int, base: int = 0x1000000):
    """Base addresses of the A, B and C arrays (line aligned, back to back)."""
    span = -(-elem_count * elem_bytes // LINE_BYTES) * LINE_BYTES
    return base, base + span, base + 2 * span


def gen_stream_triad(elem_count: int, elem_bytes: int = 4, repetitions: int = 1,
                     base: int = 0x1000000) -> Trace:
    """Sequential Load A[i], Load B[i], Alu, Alu, Store C[i] over three arrays."""
    if elem_count <= 0 or elem_bytes <= 0 or repetitions <= 0:
        raise TraceError("elem_count, elem_bytes and repetitions must be positive")
    a, b, c = triad_layout(elem_count, elem_bytes, base)
    body = [Kind.LOAD, Kind.LOAD] + [Kind.ALU] * TRIAD_ALU_PER_ELEM + [Kind.STORE]
    per = len(body)
    idx = np.arange(elem_count, dtype=np.int64) * elem_bytes
    addr_one = np.zeros((elem_count, per), dtype=np.int64)
    addr_one[:, 0] = a + idx
    addr_one[:, 1] = b + idx
    addr_one[:, per - 1] = c + idx
    addr = np.tile(addr_one.reshape(-1), repetitions)
    kind = np.tile(np.array(body, dtype=np.int8), elem_count * repetitions)
    n = len(kind)
    return Trace(kind=kind, pc=_loop_pcs(n, per), addr=addr)


@dataclass(frozen=True)
class AlwaysTaken:
    pass


@dataclass(frozen=True)
class NeverTaken:
    pass


@dataclass(frozen=True)
class Periodic:
    """Taken except on every k-th occurrence."""
    k: int

    def __post_init__(self):
        if self.k < 2:
            raise TraceError("Periodic pattern needs k >= 2")


@dataclass(frozen=True)
class Random:
    p: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise TraceError("Random pattern needs 0 <= p <= 1")


BranchPattern = Union[AlwaysTaken, NeverTaken, Periodic, Random]


def pattern_outcomes(pattern: BranchPattern, n: int) -> np.ndarray:
    if isinstance(pattern, AlwaysTaken):
        return np.ones(n, dtype=np.int8)
    if isinstance(pattern, NeverTaken):
        return np.zeros(n, dtype=np.int8)
    if isinstance(pattern, Periodic):
        return ((np.arange(1, n + 1) % pattern.k) != 0).astype(np.int8)
    if isinstance(pattern, Random):
        rng = np.random.default_rng(pattern.seed)
        return (rng.random(n) < pattern.p).astype(np.int8)
    raise TraceError(f"unknown branch pattern {pattern!r}")


def gen_branch_pattern(pattern: BranchPattern, n: int, pad: int = BRANCH_PAD) -> Trace:
    """``n`` conditional branches at one pc, each preceded by ``pad`` Alu ops.

    The branch closes a loop: its target is the first pad instruction.
    """
    if n < 0 or pad < 0:
        raise TraceError("n and pad must be non-negative")
    per = pad + 1
    total = n * per
    kind = np.tile(np.array([Kind.ALU] * pad + [Kind.COND_BRANCH], dtype=np.int8), n)
    pc = _loop_pcs(total, per)
    is_br = kind == Kind.COND_BRANCH
    taken = np.zeros(total, dtype=np.int8)
    taken[is_br] = pattern_outcomes(pattern, n)
    target = np.where(is_br, CODE_BASE, 0).astype(np.int64)
    return Trace(kind=kind, pc=pc, taken=taken, target=target)


def enumerate_mixes(apps: Sequence[str], k: int) -> dict:
    """All k-combinations of ``apps`` in lexicographic order, keyed by 1-based ID."""
    apps = list(apps)
    if apps != sorted(apps):
        raise ValueError("apps must be sorted alphabetically")
    if k > len(apps) or k < 1:
        raise ValueError(f"cannot choose {k} of {len(apps)} apps")
    return {i + 1: mix for i, mix in enumerate(itertools.combinations(apps, k))}


@dataclass(frozen=True)
class Independent:
    """Each thread loops over its own slice of a fixed data set."""
    data_bytes: int = 16 * 1024


@dataclass(frozen=True)
class SharedReadMostly:
    """Fraction ``f`` of loads read one region shared by all threads."""
    f: float
    shared_bytes: int = 64 * 1024
    private_bytes: int = 16 * 1024

    def __post_init__(self):
        if not 0.0 <= self.f <= 1.0:
            raise TraceError("SharedReadMostly needs 0 <= f <= 1")


@dataclass(frozen=True)
class BandwidthBound:
    """Each thread streams once through a private region, one load per line."""
    pass


Kernel = Union[Independent, SharedReadMostly, BandwidthBound]

FORK_JOIN_THREADS = (1, 2, 4, 8, 16)
FORK_DATA_BASE = 1 << 32
SHARED_BASE = 1 << 31
# Stores to the shared region, as a fraction of shared-region loads.
SHARED_STORE_RATE = 1 / 64
INDEPENDENT_ALU_PER_LOAD = 7
SHARED_ALU_PER_LOAD = 3
BANDWIDTH_ALU_PER_LOAD = 3


def _kernel_thread(kernel: Kernel, n_threads: int, t: int, work: int,
                   rng: np.random.Generator) -> Trace:
    # per-thread data are consecutive slices of one array, as an SPMD program lays them out
    if isinstance(kernel, Independent):
        period = INDEPENDENT_ALU_PER_LOAD + 1
        pos = np.arange(work) % period
        kind = np.where(pos == 0, Kind.LOAD, Kind.ALU).astype(np.int8)
        lines = max(1, kernel.data_bytes // n_threads // LINE_BYTES)
        private = FORK_DATA_BASE + t * lines * LINE_BYTES
        addr = np.zeros(work, dtype=np.int64)
        n_ld = int(np.count_nonzero(pos == 0))
        addr[pos == 0] = private + (np.arange(n_ld) % lines) * LINE_BYTES
        return Trace(kind=kind, pc=_loop_pcs(work, period), addr=addr)
    if isinstance(kernel, SharedReadMostly):
        period = SHARED_ALU_PER_LOAD + 1
        pos = np.arange(work) % period
        is_mem = pos == 0
        n_mem = int(np.count_nonzero(is_mem))
        private_lines = max(1, kernel.private_bytes // LINE_BYTES)
        private = FORK_DATA_BASE + t * private_lines * LINE_BYTES
        shared = rng.random(n_mem) < kernel.f
        store = shared & (rng.random(n_mem) < SHARED_STORE_RATE)
        offs = np.where(
            shared,
            SHARED_BASE + rng.integers(0, kernel.shared_bytes // LINE_BYTES, n_mem) * LINE_BYTES,
            private + rng.integers(0, private_lines, n_mem) * LINE_BYTES,
        )
        kind = np.full(work, Kind.ALU, dtype=np.int8)
        kind[is_mem] = np.where(store, Kind.STORE, Kind.LOAD)
        addr = np.zeros(work, dtype=np.int64)
        addr[is_mem] = offs
        return Trace(kind=kind, pc=_loop_pcs(work, period), addr=addr)
    if isinstance(kernel, BandwidthBound):
        period = BANDWIDTH_ALU_PER_LOAD + 1
        pos = np.arange(work) % period
        kind = np.where(pos == 0, Kind.LOAD, Kind.ALU).astype(np.int8)
        addr = np.zeros(work, dtype=np.int64)
        n_ld = int(np.count_nonzero(pos == 0))
        private = FORK_DATA_BASE + t * n_ld * LINE_BYTES
        addr[pos == 0] = private + np.arange(n_ld, dtype=np.int64) * LINE_BYTES
        return Trace(kind=kind, pc=_loop_pcs(work, period), addr=addr)
    raise TraceError(f"unknown kernel {kernel!r}")


def gen_fork_join(n_threads: int, kernel: Kernel, work_per_thread: int,
                  n_barriers: int, seed: int) -> Workload:
    """SPMD threads running ``kernel`` with ``n_barriers`` evenly spaced barriers."""
    if n_threads not in FORK_JOIN_THREADS:
        raise TraceError(f"n_threads must be one of {FORK_JOIN_THREADS}")
    if work_per_thread <= 0 or n_barriers < 0:
        raise TraceError("work_per_thread must be positive and n_barriers non-negative")
    if n_barriers >= work_per_thread:
        raise TraceError("more barriers than instructions")
    rng = np.random.default_rng(seed)
    traces = [_kernel_thread(kernel, n_threads, t, work_per_thread, rng) for t in range(n_threads)]
    phase = work_per_thread // (n_barriers + 1)
    sync = [(t, j * phase) for t in range(n_threads) for j in range(1, n_barriers + 1)]
    return Workload(
        name=f"{type(kernel).__name__.lower()}-{n_threads}",
        traces=traces,
        kind=WorkloadKind.FORK_JOIN,
        sync_points=sync,
    )
