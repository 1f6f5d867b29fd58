"""A multicore system: cores of one model, their predictors, and a shared memory hierarchy."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import bpred, mem
from ..config import MachineConfig
from ..isa.trace import Trace, Workload, WorkloadKind
from . import engine

MODELS = {"acc": engine.MODEL_ACC, "oneipc": engine.MODEL_ONEIPC}
MODEL_NAMES = {v: k for k, v in MODELS.items()}
DEFAULT_WARMUP = 256
DEFAULT_JITTER = 256


class SimulationError(RuntimeError):
    pass


@dataclass
class CoreStats:
    cycles: int = 0
    instrs_committed: int = 0
    branches: int = 0
    mispredicts: int = 0
    jumps: int = 0
    flushes: int = 0
    uops: int = 0
    l1i_misses: int = 0
    l1d_misses: int = 0
    l1d_upgrades: int = 0
    l2_accesses: int = 0
    l2_misses: int = 0

    @property
    def ipc(self) -> float:
        return self.instrs_committed / self.cycles if self.cycles else 0.0


@dataclass
class SystemResult:
    cycles: int
    window_start: int
    window_end: int
    cores: list = field(default_factory=list)


def _model_id(model) -> int:
    if isinstance(model, str):
        try:
            return MODELS[model.lower().replace("-", "").replace("1ipc", "oneipc")]
        except KeyError:
            raise ValueError(f"unknown core model {model!r}; expected 'acc' or 'oneipc'") from None
    return int(model)


def _jitter(seed: int, n: int, jitter_max: int) -> np.ndarray:
    if jitter_max <= 0:
        return np.zeros(n, dtype=np.int64)
    rng = np.random.default_rng([seed, 0x51AB])
    return rng.integers(0, jitter_max, size=n).astype(np.int64)


class System:
    """Runs a workload on ``config`` with one core model.

    ``memory`` and ``predictor_state`` may be supplied to start from warmed
    structures; otherwise fresh ones are built from ``config`` and ``seed``.
    """

    def __init__(self, config: MachineConfig, workload: Workload, model="acc", seed: int = 0,
                 memory: mem.MemoryHierarchy = None, predictor_state: bpred.PredState = None,
                 warmup: int = DEFAULT_WARMUP, jitter_max: int = None):
        self.config = config
        self.workload = workload
        self.model = _model_id(model)
        n = workload.n_threads
        self.memory = memory if memory is not None else mem.MemoryHierarchy(config, seed)
        if n > self.memory.config.n_cores:
            raise SimulationError(f"workload has {n} threads but the machine has "
                                  f"{self.memory.config.n_cores} cores")
        self.pred = predictor_state if predictor_state is not None else \
            bpred.new_pred_state(config.predictor, max(n, 1))
        if jitter_max is None:
            # independent programs start at slightly different points; the
            # threads of one parallel program start together
            jitter_max = DEFAULT_JITTER if workload.kind == WorkloadKind.MULTIPROGRAMMED else 0
        gates = [[workload.begin[t]] + workload.barriers(t) for t in range(n)]
        self.state = engine.new_sys_state(
            workload.traces, self.model, gates, _jitter(seed, n, jitter_max),
            restart=workload.kind == WorkloadKind.MULTIPROGRAMMED, warmup=warmup)

    @property
    def now(self) -> int:
        return int(self.state.g[engine.G_T])

    @property
    def finished(self) -> bool:
        return self.state.g[engine.G_STATUS] != engine.STATUS_RUNNING

    def step(self) -> bool:
        """Advance to and through the next active cycle; returns False once finished."""
        if self.finished:
            return False
        nxt = int(self.state.next_time.min()) if len(self.state.next_time) else 0
        status = engine.run_k(self.state, self.memory.state, self.pred, nxt)
        self._check(status)
        return status == engine.STATUS_RUNNING

    def run(self) -> SystemResult:
        status = engine.run_k(self.state, self.memory.state, self.pred, engine.INF)
        self._check(status)
        return self.result()

    def _check(self, status) -> None:
        if status == engine.STATUS_DEADLOCK:
            raise SimulationError("simulation stalled: no core can make progress")

    def result(self) -> SystemResult:
        ss = self.state
        n = self.workload.n_threads
        stats = np.zeros((n, engine.N_STATS), dtype=np.int64)
        ctr = np.zeros((n, mem.N_CORE_CTR), dtype=np.int64)
        if n:
            engine.finalize_k(ss, self.memory.state, stats, ctr)
        r, e = int(ss.g[engine.G_R]), int(ss.g[engine.G_E])
        cycles = max(0, e - r)
        cores = []
        for c in range(n):
            st, m = stats[c], ctr[c]
            cores.append(CoreStats(
                cycles=cycles,
                instrs_committed=int(st[engine.S_INSTRS]),
                branches=int(st[engine.S_BRANCHES]),
                mispredicts=int(st[engine.S_MISPRED]),
                jumps=int(st[engine.S_JUMPS]),
                flushes=int(st[engine.S_FLUSHES]),
                uops=int(st[engine.S_UOPS]),
                l1i_misses=int(m[mem.C_L1I_MISS]),
                l1d_misses=int(m[mem.C_L1D_MISS]),
                l1d_upgrades=int(m[mem.C_L1D_UPG]),
                l2_accesses=int(m[mem.C_L2_ACC]),
                l2_misses=int(m[mem.C_L2_MISS]),
            ))
        return SystemResult(cycles=cycles, window_start=r, window_end=e, cores=cores)


def run_workload(config: MachineConfig, workload: Workload, model="acc", seed: int = 0,
                 **kw) -> SystemResult:
    return System(config, workload, model, seed, **kw).run()


def _predictor_state(config: MachineConfig, predictor):
    if predictor is None:
        return None
    if isinstance(predictor, bpred.BranchPredictor):
        if predictor.core != 0:
            raise ValueError("a single-core run drives predictor slot 0")
        return predictor.state
    if isinstance(predictor, bpred.PredState):
        return predictor
    return bpred.new_pred_state(predictor, 1)


def run_core(trace: Trace, config: MachineConfig, memory=None, predictor=None, model="acc",
             warmup: int = DEFAULT_WARMUP, seed: int = 0) -> CoreStats:
    """Run one trace to completion on core 0 and return its statistics."""
    config = config or MachineConfig()
    wl = Workload(name="trace", traces=[trace])
    sysm = System(config, wl, model, seed, memory=memory,
                  predictor_state=_predictor_state(config, predictor), warmup=warmup)
    return sysm.run().cores[0]
