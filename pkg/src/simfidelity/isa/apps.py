"""Synthetic stand-ins for the single-thread applications of the LLC study.

The instruction mixes below are design choices, not calibrated reproductions
of the original programs.  Each app has a fixed seed, so a given (app, length)
always yields the same trace; run-to-run variation is introduced by the
harness, not here.
"""
from __future__ import annotations

import zlib

import numpy as np

from .generators import (
    CODE_BASE,
    LINE_BYTES,
    AlwaysTaken,
    NeverTaken,
    Periodic,
    Random,
    enumerate_mixes,
    gen_branch_pattern,
    gen_pointer_chase,
    gen_stream_triad,
)
from .trace import Kind, Trace, Workload, WorkloadKind, multiprogrammed

KiB = 1024
MiB = 1024 * KiB

LLC_APPS = ("bzip2", "gobmk", "libquantum", "mcf", "pointer", "stream")
DEFAULT_SLOT_INSTRS = 1_000_000
DATA_BASE = 0x10000000


def _app_seed(name: str) -> int:
    return zlib.crc32(name.encode())


def _program(rng, n_static: int, mix: dict) -> np.ndarray:
    kinds = list(mix)
    p = np.array([mix[k] for k in kinds], dtype=float)
    return rng.choice(np.array(kinds, dtype=np.int8), size=n_static, p=p / p.sum())


def _branch_outcomes(rng, prog_kind, kind, slot):
    """Per static branch: a biased coin or a short periodic pattern."""
    n_static = len(prog_kind)
    behaviour = rng.integers(0, 4, size=n_static)
    bias = rng.choice([0.02, 0.1, 0.9, 0.98], size=n_static)
    period = rng.integers(2, 9, size=n_static)
    taken = np.zeros(len(kind), dtype=np.int8)
    is_br = kind == Kind.COND_BRANCH
    s = slot[is_br]
    # occurrence number of each dynamic branch among instances of its static slot
    order = np.argsort(s, kind="stable")
    sorted_s = s[order]
    first = np.searchsorted(sorted_s, sorted_s, side="left")
    occ = np.empty(len(s), dtype=np.int64)
    occ[order] = np.arange(len(s)) - first
    coin = rng.random(len(s))
    periodic = (occ % period[s]) != (period[s] - 1)
    biased = coin < bias[s]
    taken[is_br] = np.where(behaviour[s] == 0, periodic, biased)
    return taken


def _synthetic(name: str, n: int, code_bytes: int, mix: dict, addr_fn) -> Trace:
    rng = np.random.default_rng(_app_seed(name))
    n_static = code_bytes // 4
    prog = _program(rng, n_static, mix)
    crack_static = rng.integers(2, 5, size=n_static).astype(np.int16)
    slot = np.arange(n, dtype=np.int64) % n_static
    kind = prog[slot]
    pc = CODE_BASE + 4 * slot
    is_mem = (kind == Kind.LOAD) | (kind == Kind.STORE)
    addr = np.zeros(n, dtype=np.int64)
    addr[is_mem] = addr_fn(rng, int(np.count_nonzero(is_mem)))
    taken = _branch_outcomes(rng, prog, kind, slot)
    is_jump = kind == Kind.JUMP
    taken[is_jump] = 1
    is_br = (kind == Kind.COND_BRANCH) | is_jump
    # taken branches fall back to the next static slot; the target is static per pc
    target = np.where(is_br, CODE_BASE + 4 * ((slot + 1) % n_static), 0)
    crack = np.where(kind == Kind.COMPLEX, crack_static[slot], 1).astype(np.int16)
    return Trace(kind=kind, pc=pc, addr=addr, taken=taken, target=target, crack=crack)


def _random_lines(region: int, base: int = DATA_BASE):
    def fn(rng, m):
        return base + rng.integers(0, region // LINE_BYTES, size=m) * LINE_BYTES
    return fn


def _sequential_random(region: int, seq_frac: float, base: int = DATA_BASE, stride: int = 8):
    """A sequential cursor through ``region`` mixed with uniform random lines."""
    def fn(rng, m):
        seq = base + (np.arange(m, dtype=np.int64) * stride) % region
        rnd = base + rng.integers(0, region // LINE_BYTES, size=m) * LINE_BYTES
        return np.where(rng.random(m) < seq_frac, seq, rnd)
    return fn


def _stream_rmw(region: int, base: int = DATA_BASE):
    def fn(rng, m):
        return base + (np.arange(m, dtype=np.int64) // 2 * LINE_BYTES) % region
    return fn


def bzip2(n: int) -> Trace:
    mix = {Kind.ALU: 45, Kind.LOAD: 25, Kind.STORE: 10, Kind.COND_BRANCH: 15, Kind.COMPLEX: 5}
    return _synthetic("bzip2", n, 4 * KiB, mix, _sequential_random(768 * KiB, 0.6))


def gobmk(n: int) -> Trace:
    mix = {Kind.ALU: 40, Kind.LOAD: 22, Kind.STORE: 8, Kind.COND_BRANCH: 20,
           Kind.JUMP: 5, Kind.COMPLEX: 5}
    return _synthetic("gobmk", n, 24 * KiB, mix, _random_lines(192 * KiB))


def libquantum(n: int) -> Trace:
    # load + store of each line in turn: a pure scan over a 1.5 MiB register array
    body = [Kind.LOAD, Kind.ALU, Kind.ALU, Kind.STORE, Kind.ALU, Kind.COND_BRANCH]
    kind = np.tile(np.array(body, dtype=np.int8), -(-n // len(body)))[:n]
    pc = CODE_BASE + 4 * (np.arange(n) % len(body))
    is_mem = (kind == Kind.LOAD) | (kind == Kind.STORE)
    addr = np.zeros(n, dtype=np.int64)
    addr[is_mem] = _stream_rmw(1536 * KiB)(None, int(np.count_nonzero(is_mem)))
    is_br = kind == Kind.COND_BRANCH
    taken = is_br.astype(np.int8)
    target = np.where(is_br, CODE_BASE, 0)
    return Trace(kind=kind, pc=pc, addr=addr, taken=taken, target=target)


def mcf(n: int) -> Trace:
    mix = {Kind.ALU: 50, Kind.LOAD: 30, Kind.STORE: 5, Kind.COND_BRANCH: 15}
    return _synthetic("mcf", n, 2 * KiB, mix, _random_lines(1 * MiB))


def pointer(n: int) -> Trace:
    return gen_pointer_chase(_app_seed("pointer"), 4 * MiB, n, base=DATA_BASE)


def stream(n: int) -> Trace:
    per_rep = 200_000 * 5
    reps = max(1, -(-n // per_rep))
    return gen_stream_triad(200_000, 4, reps, base=DATA_BASE)[:n]


APPS = {
    "bzip2": bzip2,
    "gobmk": gobmk,
    "libquantum": libquantum,
    "mcf": mcf,
    "pointer": pointer,
    "stream": stream,
}

_CACHE: dict = {}


def app_trace(name: str, n_instrs: int = DEFAULT_SLOT_INSTRS) -> Trace:
    if name not in APPS:
        raise KeyError(f"unknown app {name!r}; known: {sorted(APPS)}")
    key = (name, n_instrs)
    if key not in _CACHE:
        _CACHE[key] = APPS[name](n_instrs)
    return _CACHE[key]


def llc_mixes(apps=LLC_APPS, k: int = 4) -> dict:
    return enumerate_mixes(sorted(apps), k)


def mix_workload(mix_id: int, n_instrs: int = DEFAULT_SLOT_INSTRS, apps=LLC_APPS, k: int = 4) -> Workload:
    mix = llc_mixes(apps, k)[mix_id]
    return multiprogrammed(f"mix{mix_id}", [app_trace(a, n_instrs) for a in mix], apps=mix)


def single_app_workload(name: str, n_instrs: int = DEFAULT_SLOT_INSTRS) -> Workload:
    return Workload(name=name, traces=[app_trace(name, n_instrs)], apps=[name])


# Branch-predictor study stimuli.
BRANCH_PATTERNS = {
    "always_taken": AlwaysTaken(),
    "never_taken": NeverTaken(),
    "periodic_8": Periodic(8),
    "periodic_40": Periodic(40),
    "random_0.5": Random(0.5, seed=2024),
}


def branchy(n_branches: int, seed: int = 11) -> Trace:
    """Many static branches with mixed behaviours and short, irregular spacing."""
    rng = np.random.default_rng(seed)
    n = int(n_branches * 4.5)
    mix = {Kind.ALU: 70, Kind.COND_BRANCH: 22, Kind.LOAD: 8}
    n_static = 2048
    prog = _program(rng, n_static, mix)
    slot = np.arange(n, dtype=np.int64) % n_static
    kind = prog[slot]
    addr = np.zeros(n, dtype=np.int64)
    is_mem = kind == Kind.LOAD
    addr[is_mem] = _random_lines(32 * KiB)(rng, int(np.count_nonzero(is_mem)))
    taken = _branch_outcomes(rng, prog, kind, slot)
    is_br = kind == Kind.COND_BRANCH
    target = np.where(is_br, CODE_BASE + 4 * ((slot + 1) % n_static), 0)
    return Trace(kind=kind, pc=CODE_BASE + 4 * slot, addr=addr, taken=taken, target=target)


def brpred_workload(name: str, n_branches: int = 100_000) -> Workload:
    if name in BRANCH_PATTERNS:
        tr = gen_branch_pattern(BRANCH_PATTERNS[name], n_branches)
    elif name == "branchy":
        tr = branchy(n_branches)
    else:
        raise KeyError(f"unknown branch workload {name!r}")
    return Workload(name=name, traces=[tr], kind=WorkloadKind.SINGLE_THREAD)


BRPRED_WORKLOADS = tuple(BRANCH_PATTERNS) + ("branchy",)
