"""Abstract dynamic-instruction traces.

A trace is stored column-wise (one numpy array per field) so the compiled
simulator can consume it directly.  ``TraceInstr`` is the row view used by
tests, trace files and anything else that wants one instruction at a time.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np


class Kind(enum.IntEnum):
    ALU = 0
    LOAD = 1
    STORE = 2
    COND_BRANCH = 3
    JUMP = 4
    COMPLEX = 5


FLAG_CALL = 1
FLAG_RETURN = 2

# Multiprogrammed slots live in disjoint address spaces selected by these bits.
ASID_SHIFT = 44
ASID_BITS = 4


class TraceError(ValueError):
    """Malformed instruction or trace."""


@dataclass(frozen=True)
class TraceInstr:
    kind: Kind
    pc: int
    mem_addr: Optional[int] = None
    taken: Optional[bool] = None
    target: Optional[int] = None
    crack_count: Optional[int] = None
    is_call: bool = False
    is_return: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        problem = _check(self.kind, self.mem_addr, self.taken, self.target, self.crack_count)
        if problem:
            raise TraceError(problem)


def _check(kind, mem_addr, taken, target, crack_count) -> Optional[str]:
    is_mem = kind in (Kind.LOAD, Kind.STORE)
    is_br = kind in (Kind.COND_BRANCH, Kind.JUMP)
    if is_mem != (mem_addr is not None):
        return f"{kind.name}: mem_addr must be present iff Load/Store"
    if is_br != (taken is not None and target is not None):
        return f"{kind.name}: taken/target must be present iff CondBranch/Jump"
    if kind == Kind.JUMP and not taken:
        return "JUMP: taken must be true"
    if (kind == Kind.COMPLEX) != (crack_count is not None):
        return f"{kind.name}: crack_count must be present iff Complex"
    if kind == Kind.COMPLEX and crack_count < 2:
        return "COMPLEX: crack_count must be >= 2"
    return None


_FIELDS = ("kind", "pc", "addr", "taken", "target", "crack", "flags")
_DTYPES = {
    "kind": np.int8,
    "pc": np.int64,
    "addr": np.int64,
    "taken": np.int8,
    "target": np.int64,
    "crack": np.int16,
    "flags": np.int8,
}


class Trace:
    """Immutable column-oriented instruction sequence.

    Unused fields hold 0 (``crack`` holds 1 for non-Complex instructions so the
    simulator can treat every instruction as ``crack`` micro-ops).
    """

    __slots__ = _FIELDS

    def __init__(self, kind, pc, addr=None, taken=None, target=None, crack=None, flags=None):
        n = len(kind)
        cols = {"kind": kind, "pc": pc, "addr": addr, "taken": taken,
                "target": target, "crack": crack, "flags": flags}
        for name in _FIELDS:
            col = cols[name]
            if col is None:
                col = np.ones(n) if name == "crack" else np.zeros(n)
            arr = np.ascontiguousarray(col, dtype=_DTYPES[name])
            if arr.shape != (n,):
                raise TraceError(f"column {name!r} has shape {arr.shape}, expected ({n},)")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __setattr__(self, name, value):
        raise AttributeError("Trace is immutable")

    @classmethod
    def from_instrs(cls, instrs: Iterable[TraceInstr]) -> "Trace":
        instrs = list(instrs)
        n = len(instrs)
        cols = {name: np.zeros(n, dtype=_DTYPES[name]) for name in _FIELDS}
        cols["crack"][:] = 1
        for i, ins in enumerate(instrs):
            cols["kind"][i] = ins.kind
            cols["pc"][i] = ins.pc
            if ins.mem_addr is not None:
                cols["addr"][i] = ins.mem_addr
            if ins.taken is not None:
                cols["taken"][i] = 1 if ins.taken else 0
                cols["target"][i] = ins.target
            if ins.crack_count is not None:
                cols["crack"][i] = ins.crack_count
            cols["flags"][i] = (FLAG_CALL if ins.is_call else 0) | (FLAG_RETURN if ins.is_return else 0)
        return cls(**cols)

    @classmethod
    def empty(cls) -> "Trace":
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def concat(cls, traces: Sequence["Trace"]) -> "Trace":
        if not traces:
            return cls.empty()
        return cls(**{name: np.concatenate([getattr(t, name) for t in traces]) for name in _FIELDS})

    def __len__(self) -> int:
        return len(self.kind)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Trace(**{name: getattr(self, name)[i] for name in _FIELDS})
        k = Kind(int(self.kind[i]))
        is_mem = k in (Kind.LOAD, Kind.STORE)
        is_br = k in (Kind.COND_BRANCH, Kind.JUMP)
        flags = int(self.flags[i])
        return TraceInstr(
            kind=k,
            pc=int(self.pc[i]),
            mem_addr=int(self.addr[i]) if is_mem else None,
            taken=bool(self.taken[i]) if is_br else None,
            target=int(self.target[i]) if is_br else None,
            crack_count=int(self.crack[i]) if k == Kind.COMPLEX else None,
            is_call=bool(flags & FLAG_CALL),
            is_return=bool(flags & FLAG_RETURN),
        )

    def __iter__(self) -> Iterator[TraceInstr]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trace):
            return NotImplemented
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in _FIELDS)

    def __repr__(self) -> str:
        return f"Trace(n={len(self)})"

    def validate(self) -> None:
        """Raise TraceError naming the first record that breaks an invariant."""
        kind = self.kind
        if len(kind) and (kind.min() < 0 or kind.max() > Kind.COMPLEX):
            bad = int(np.flatnonzero((kind < 0) | (kind > Kind.COMPLEX))[0])
            raise TraceError(f"record {bad}: unknown kind {int(kind[bad])}")
        jump_not_taken = (kind == Kind.JUMP) & (self.taken == 0)
        short_crack = (kind == Kind.COMPLEX) & (self.crack < 2)
        bad = np.flatnonzero(jump_not_taken | short_crack)
        if len(bad):
            raise TraceError(f"record {int(bad[0])}: invalid taken/crack_count")

    def count(self, kind: Kind) -> int:
        return int(np.count_nonzero(self.kind == kind))

    def with_asid(self, slot: int) -> "Trace":
        """Copy with pc and data addresses moved into address space ``slot``."""
        if not 0 <= slot < (1 << ASID_BITS):
            raise TraceError(f"address-space slot {slot} out of range")
        tag = np.int64(slot) << ASID_SHIFT
        is_mem = (self.kind == Kind.LOAD) | (self.kind == Kind.STORE)
        is_br = (self.kind == Kind.COND_BRANCH) | (self.kind == Kind.JUMP)
        return Trace(
            kind=self.kind,
            pc=self.pc | tag,
            addr=np.where(is_mem, self.addr | tag, self.addr),
            taken=self.taken,
            target=np.where(is_br, self.target | tag, self.target),
            crack=self.crack,
            flags=self.flags,
        )


class WorkloadKind(enum.Enum):
    SINGLE_THREAD = "single"
    MULTIPROGRAMMED = "multiprogrammed"
    FORK_JOIN = "forkjoin"


@dataclass
class Workload:
    """A set of per-thread traces plus synchronisation markers.

    ``begin`` gives, per thread, the index of the begin marker: statistics are
    collected once every thread has committed everything before it.
    ``sync_points`` are (thread, trace_index) barrier markers for fork-join
    workloads: a thread may not fetch ``trace_index`` until every thread has
    reached its barrier with the same ordinal.
    """

    name: str
    traces: list
    kind: WorkloadKind = WorkloadKind.SINGLE_THREAD
    sync_points: list = field(default_factory=list)
    begin: Optional[list] = None
    apps: Optional[list] = None

    def __post_init__(self):
        if self.begin is None:
            self.begin = [0] * len(self.traces)
        if len(self.begin) != len(self.traces):
            raise TraceError("begin markers must match thread count")
        for t, b in enumerate(self.begin):
            if not 0 <= b <= len(self.traces[t]):
                raise TraceError(f"thread {t}: begin marker {b} outside trace")
        if self.kind != WorkloadKind.FORK_JOIN and self.sync_points:
            raise TraceError("sync points are only allowed on fork-join workloads")
        if self.kind == WorkloadKind.FORK_JOIN:
            counts = [len(self.barriers(t)) for t in range(len(self.traces))]
            if len(set(counts)) > 1:
                raise TraceError(f"barrier counts differ across threads: {counts}")

    @property
    def n_threads(self) -> int:
        return len(self.traces)

    def barriers(self, thread: int) -> list:
        return sorted(idx for t, idx in self.sync_points if t == thread)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Workload):
            return NotImplemented
        return (
            self.name == other.name
            and self.kind == other.kind
            and list(self.begin) == list(other.begin)
            and sorted(self.sync_points) == sorted(other.sync_points)
            and len(self.traces) == len(other.traces)
            and all(a == b for a, b in zip(self.traces, other.traces))
        )


def multiprogrammed(name: str, traces: Sequence[Trace], apps=None) -> Workload:
    """One trace per core, each relocated into its own address space."""
    return Workload(
        name=name,
        traces=[t.with_asid(slot) for slot, t in enumerate(traces)],
        kind=WorkloadKind.MULTIPROGRAMMED,
        apps=list(apps) if apps is not None else None,
    )
