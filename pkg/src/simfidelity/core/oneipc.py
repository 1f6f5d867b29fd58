"""The simplified core: one instruction per cycle, stalling only on L1 misses."""
from __future__ import annotations

from .system import DEFAULT_WARMUP, CoreStats, System, run_core


def oneipc_step(system: System) -> bool:
    """Advance a 1-IPC system to its next event."""
    return system.step()


def run_core_oneipc(trace, config=None, memory=None, predictor=None,
                    warmup: int = DEFAULT_WARMUP) -> CoreStats:
    return run_core(trace, config, memory, predictor, "oneipc", warmup)
