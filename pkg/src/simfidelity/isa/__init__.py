from .trace import (
    ASID_SHIFT,
    FLAG_CALL,
    FLAG_RETURN,
    Kind,
    Trace,
    TraceError,
    TraceInstr,
    Workload,
    WorkloadKind,
    multiprogrammed,
)
from .generators import (
    AlwaysTaken,
    BandwidthBound,
    Independent,
    NeverTaken,
    Periodic,
    Random,
    SharedReadMostly,
    enumerate_mixes,
    gen_branch_pattern,
    gen_fork_join,
    gen_pointer_chase,
    gen_stream_triad,
)
from .traceio import read_workload, trace_io, write_workload

__all__ = [
    "ASID_SHIFT", "FLAG_CALL", "FLAG_RETURN", "Kind", "Trace", "TraceError", "TraceInstr",
    "Workload", "WorkloadKind", "multiprogrammed", "AlwaysTaken", "BandwidthBound",
    "Independent", "NeverTaken", "Periodic", "Random", "SharedReadMostly", "enumerate_mixes",
    "gen_branch_pattern", "gen_fork_join", "gen_pointer_chase", "gen_stream_triad",
    "read_workload", "trace_io", "write_workload",
]
