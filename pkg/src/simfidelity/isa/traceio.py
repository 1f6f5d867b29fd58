"""Text trace files.

Layout (whitespace separated, one record per line; ``.gz`` paths are gzipped)::

    SFTRACE <version> <n_threads> <workload-kind> <name>
    T <thread> <n_records> <begin_index>
    <record> * n_records
    ...                                   (one T section per thread)
    P <thread> <trace_index>              (fork-join barrier markers, any number)

Records, in fixed field order ``kind pc [mem_addr] [taken target] [crack_count] flags``::

    A <pc> <flags>
    L <pc> <mem_addr> <flags>
    S <pc> <mem_addr> <flags>
    B <pc> <taken:0|1> <target> <flags>
    J <pc> <target> <flags>               (taken is implicit)
    C <pc> <crack_count> <flags>

Addresses are hex; ``flags`` is ``-`` or any of ``c`` (call) and ``r`` (return).
"""
from __future__ import annotations

import gzip
from pathlib import Path

import numpy as np

from .trace import FLAG_CALL, FLAG_RETURN, Kind, Trace, TraceError, Workload, WorkloadKind

VERSION = 1
MAGIC = "SFTRACE"
_CODES = {Kind.ALU: "A", Kind.LOAD: "L", Kind.STORE: "S",
          Kind.COND_BRANCH: "B", Kind.JUMP: "J", Kind.COMPLEX: "C"}
_KINDS = {v: k for k, v in _CODES.items()}


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="ascii")
    return open(path, mode, encoding="ascii")


def _flags(v: int) -> str:
    s = ("c" if v & FLAG_CALL else "") + ("r" if v & FLAG_RETURN else "")
    return s or "-"


def write_workload(path, workload: Workload) -> None:
    with _open(path, "w") as f:
        f.write(f"{MAGIC} {VERSION} {workload.n_threads} {workload.kind.value} {workload.name}\n")
        for t, tr in enumerate(workload.traces):
            f.write(f"T {t} {len(tr)} {workload.begin[t]}\n")
            kinds, pcs, addrs = tr.kind.tolist(), tr.pc.tolist(), tr.addr.tolist()
            taken, targets = tr.taken.tolist(), tr.target.tolist()
            cracks, flags = tr.crack.tolist(), tr.flags.tolist()
            lines = []
            for i in range(len(tr)):
                k = kinds[i]
                fl = _flags(flags[i])
                if k in (Kind.LOAD, Kind.STORE):
                    lines.append(f"{_CODES[k]} {pcs[i]:x} {addrs[i]:x} {fl}")
                elif k == Kind.COND_BRANCH:
                    lines.append(f"B {pcs[i]:x} {taken[i]} {targets[i]:x} {fl}")
                elif k == Kind.JUMP:
                    lines.append(f"J {pcs[i]:x} {targets[i]:x} {fl}")
                elif k == Kind.COMPLEX:
                    lines.append(f"C {pcs[i]:x} {cracks[i]} {fl}")
                else:
                    lines.append(f"A {pcs[i]:x} {fl}")
            if lines:
                f.write("\n".join(lines))
                f.write("\n")
        for t, idx in sorted(workload.sync_points):
            f.write(f"P {t} {idx}\n")


def _parse_flags(tok: str, where: str) -> int:
    if tok == "-":
        return 0
    v = 0
    for ch in tok:
        if ch == "c":
            v |= FLAG_CALL
        elif ch == "r":
            v |= FLAG_RETURN
        else:
            raise TraceError(f"{where}: bad flags {tok!r}")
    return v


def _parse_thread(lines, n: int, thread: int) -> Trace:
    kind = np.zeros(n, np.int8)
    pc = np.zeros(n, np.int64)
    addr = np.zeros(n, np.int64)
    taken = np.zeros(n, np.int8)
    target = np.zeros(n, np.int64)
    crack = np.ones(n, np.int16)
    flags = np.zeros(n, np.int8)
    for i in range(n):
        line = next(lines, None)
        if line is None:
            raise TraceError(f"truncated file: thread {thread} declares {n} records, found {i}")
        tok = line.split()
        where = f"thread {thread} record {i}"
        if not tok or tok[0] not in _KINDS:
            raise TraceError(f"{where}: unknown record {line.strip()!r}")
        k = _KINDS[tok[0]]
        expected = {Kind.ALU: 3, Kind.LOAD: 4, Kind.STORE: 4, Kind.COND_BRANCH: 5,
                    Kind.JUMP: 4, Kind.COMPLEX: 4}[k]
        if len(tok) != expected:
            missing = "mem_addr" if k in (Kind.LOAD, Kind.STORE) else "fields"
            raise TraceError(f"{where}: {k.name} record has {len(tok)} fields, "
                             f"expected {expected} (missing {missing}?)")
        try:
            kind[i] = k
            pc[i] = int(tok[1], 16)
            if k in (Kind.LOAD, Kind.STORE):
                addr[i] = int(tok[2], 16)
            elif k == Kind.COND_BRANCH:
                if tok[2] not in ("0", "1"):
                    raise TraceError(f"{where}: taken must be 0 or 1")
                taken[i] = int(tok[2])
                target[i] = int(tok[3], 16)
            elif k == Kind.JUMP:
                taken[i] = 1
                target[i] = int(tok[2], 16)
            elif k == Kind.COMPLEX:
                crack[i] = int(tok[2])
                if crack[i] < 2:
                    raise TraceError(f"{where}: crack_count must be >= 2")
        except ValueError as exc:
            raise TraceError(f"{where}: {exc}") from None
        flags[i] = _parse_flags(tok[-1], where)
    return Trace(kind=kind, pc=pc, addr=addr, taken=taken, target=target, crack=crack, flags=flags)


def read_workload(path) -> Workload:
    with _open(path, "r") as f:
        lines = iter(f)
        header = next(lines, None)
        if header is None or not header.strip():
            raise TraceError("truncated header")
        tok = header.split()
        if len(tok) != 5 or tok[0] != MAGIC:
            raise TraceError(f"bad header {header.strip()!r}")
        if int(tok[1]) != VERSION:
            raise TraceError(f"unsupported trace version {tok[1]}")
        n_threads = int(tok[2])
        kind = WorkloadKind(tok[3])
        name = tok[4]
        traces, begin = [], []
        for t in range(n_threads):
            sec = next(lines, None)
            if sec is None:
                raise TraceError(f"truncated file: missing section for thread {t}")
            st = sec.split()
            if len(st) != 4 or st[0] != "T" or int(st[1]) != t:
                raise TraceError(f"bad thread header {sec.strip()!r}")
            traces.append(_parse_thread(lines, int(st[2]), t))
            begin.append(int(st[3]))
        sync = []
        for line in lines:
            st = line.split()
            if not st:
                continue
            if st[0] != "P" or len(st) != 3:
                raise TraceError(f"unexpected trailing record {line.strip()!r}")
            sync.append((int(st[1]), int(st[2])))
    return Workload(name=name, traces=traces, kind=kind, sync_points=sync, begin=begin)


def trace_io(mode: str, path, workload: Workload = None):
    """``trace_io("write", path, w)`` / ``trace_io("read", path) -> Workload``."""
    if mode == "write":
        write_workload(path, workload)
        return workload
    if mode == "read":
        return read_workload(path)
    raise ValueError(f"mode must be 'read' or 'write', got {mode!r}")
