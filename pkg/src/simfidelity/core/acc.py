"""The cycle-accurate 10-stage in-order core (ACC)."""
from __future__ import annotations

from dataclasses import dataclass

from ..isa.trace import Kind, TraceInstr
from .engine import BP, BR, CRACK, DEC, EXE, F1, F2, MEMS, RF
from .system import DEFAULT_WARMUP, CoreStats, System, run_core

STAGE_NAMES = ("F1", "F2", "BP", "DEC", "CRACK", "RF", "BR", "MEM", "EXE", "WB")
FRONT_END = STAGE_NAMES[:5]
BACK_END = STAGE_NAMES[5:]
# fetch bubbles after a misprediction, which is detected when the branch enters BR
MISPREDICT_PENALTY = BR

__all__ = ["STAGE_NAMES", "MicroOp", "acc_crack", "acc_step", "run_core_acc",
           "F1", "F2", "BP", "DEC", "CRACK", "RF", "BR", "MEMS", "EXE"]


@dataclass(frozen=True)
class MicroOp:
    pc: int
    last: bool


def acc_crack(instr: TraceInstr) -> list:
    """Split a Complex instruction into Alu micro-ops; only the last one commits."""
    if instr.kind != Kind.COMPLEX:
        raise ValueError(f"only Complex instructions are cracked, got {instr.kind.name}")
    k = instr.crack_count
    return [MicroOp(instr.pc, i == k - 1) for i in range(k)]


def acc_step(system: System) -> bool:
    """Advance an ACC system by one active cycle."""
    return system.step()


def run_core_acc(trace, config=None, memory=None, predictor=None,
                 warmup: int = DEFAULT_WARMUP) -> CoreStats:
    return run_core(trace, config, memory, predictor, "acc", warmup)
