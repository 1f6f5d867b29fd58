import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simfidelity.config import MachineConfig, PredictorConfig
from simfidelity.core.acc import MISPREDICT_PENALTY, acc_crack, run_core_acc
from simfidelity.core.oneipc import run_core_oneipc
from simfidelity.core.system import run_core
from simfidelity.isa import Random
from simfidelity.isa.generators import gen_branch_pattern
from simfidelity.isa.trace import Kind, Trace, TraceInstr

PC0 = 0x400000
KiB = 1024


def cfg(ideal=True, predictor="tournament"):
    c = MachineConfig()
    c.memory.ideal = ideal
    c.predictor = PredictorConfig(kind=predictor)
    return c.validate()


def alus(n, start=0):
    return [TraceInstr(Kind.ALU, PC0 + 4 * (start + i)) for i in range(n)]


def run(instrs, model, c=None, **kw):
    return run_core(Trace.from_instrs(instrs), c or cfg(), model=model, warmup=0, **kw)


def branch_trace(taken):
    br = TraceInstr(Kind.COND_BRANCH, PC0 + 20, taken=taken, target=PC0 + 24)
    return alus(5) + [br] + alus(4, start=6)


# --- ACC pipeline ---------------------------------------------------------------------------

def test_ten_alus_drain_in_nineteen_cycles():
    # ten stages to the first commit, then one per cycle
    assert run(alus(10), "acc").cycles == 19


def test_redirect_costs_penalty_bubbles():
    assert MISPREDICT_PENALTY == 6
    base = run(branch_trace(False), "acc", cfg(predictor="static"))
    miss = run(branch_trace(True), "acc", cfg(predictor="static"))
    assert (base.mispredicts, miss.mispredicts) == (0, 1)
    assert miss.cycles - base.cycles == MISPREDICT_PENALTY


def test_l2_hit_load_costs_twelve():
    def ld(i, a):
        return TraceInstr(Kind.LOAD, PC0 + 4 * i, mem_addr=a)
    # five loads to one L1 set push the first line out of the 4-way L1
    pre = [ld(i, 0x10000 + i * 8 * KiB) for i in range(5)]
    l2_hit = pre + [ld(5, 0x10000)]
    l1_hit = pre + [ld(5, 0x10000 + 4 * 8 * KiB)]
    for model in ("acc", "oneipc"):
        a, b = run(l2_hit, model, cfg(False)), run(l1_hit, model, cfg(False))
        assert a.l1d_misses == b.l1d_misses + 1
        assert a.cycles - b.cycles == 12 - 1


def test_crack_splits_into_alus():
    ops = acc_crack(TraceInstr(Kind.COMPLEX, PC0, crack_count=4))
    assert len(ops) == 4 and [o.last for o in ops] == [False, False, False, True]
    with pytest.raises(ValueError):
        acc_crack(TraceInstr(Kind.ALU, PC0))


def test_cracked_instruction_timing():
    cx = alus(5) + [TraceInstr(Kind.COMPLEX, PC0 + 20, crack_count=4)] + alus(4, start=6)
    acc, one = run(cx, "acc"), run(cx, "oneipc")
    assert acc.cycles == 19 + 3 and acc.instrs_committed == 10 and acc.uops == 13
    assert one.cycles == 10 + 3


@pytest.mark.parametrize("model", ["acc", "oneipc"])
def test_empty_trace(model):
    s = run([], model)
    assert s.cycles == 0 and s.instrs_committed == 0


def test_acc_ipc_approaches_one():
    s = run_core_acc(Trace.from_instrs(alus(10**5)), cfg(), warmup=0)
    assert s.ipc >= 0.999


# --- 1-IPC ------------------------------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 10, 1000])
def test_oneipc_one_instruction_per_cycle(n):
    assert run_core_oneipc(Trace.from_instrs(alus(n)), cfg(), warmup=0).cycles == n


def test_oneipc_ignores_mispredictions():
    s = run(branch_trace(True), "oneipc", cfg(predictor="static"))
    assert s.mispredicts == 1 and s.cycles == 10


# --- cross-model properties -------------------------------------------------------------------

def _instr(draw, i):
    pc = PC0 + 4 * i
    kind = draw(st.sampled_from(list(Kind)))
    if kind in (Kind.LOAD, Kind.STORE):
        return TraceInstr(kind, pc, mem_addr=draw(st.integers(0, 255)) * 64)
    if kind in (Kind.COND_BRANCH, Kind.JUMP):
        taken = draw(st.booleans()) if kind == Kind.COND_BRANCH else True
        return TraceInstr(kind, pc, taken=taken, target=pc + 4)
    if kind == Kind.COMPLEX:
        return TraceInstr(kind, pc, crack_count=draw(st.integers(2, 6)))
    return TraceInstr(kind, pc)


@st.composite
def traces(draw, max_len=200):
    n = draw(st.integers(1, max_len))
    return [_instr(draw, i) for i in range(n)]


@settings(max_examples=30, deadline=None)
@given(traces())
def test_oneipc_cycles_equal_instrs_plus_crack_on_ideal_memory(instrs):
    extra = sum(i.crack_count - 1 for i in instrs if i.kind == Kind.COMPLEX)
    assert run(instrs, "oneipc").cycles == len(instrs) + extra


@settings(max_examples=30, deadline=None)
@given(traces())
def test_oneipc_at_least_as_fast_as_acc_ideal_memory(instrs):
    acc, one = run(instrs, "acc"), run(instrs, "oneipc")
    assert one.ipc >= acc.ipc
    assert acc.instrs_committed == one.instrs_committed == len(instrs)


@settings(max_examples=60, deadline=None)
@given(traces(max_len=16))
def test_oneipc_at_least_as_fast_as_acc_single_code_line(instrs):
    # all code in one 64-byte line: only one instruction miss, before any data access
    c = cfg(False)
    assert run(instrs, "oneipc", c).ipc >= run(instrs, "acc", c).ipc


def test_acc_overlaps_instruction_miss_with_data_miss():
    # the ACC front end fetches the next code line while a load misses in MEM;
    # the 1-IPC model serialises the two misses, so here it is the slower one
    instrs = alus(14) + [TraceInstr(Kind.LOAD, PC0 + 56, mem_addr=0x10000)] + alus(4, start=15)
    c = cfg(False)
    acc, one = run(instrs, "acc", c), run(instrs, "oneipc", c)
    assert acc.l1i_misses == one.l1i_misses == 2
    assert one.cycles > acc.cycles


@settings(max_examples=30, deadline=None)
@given(traces(), st.sampled_from(["tournament", "path_neural", "tage"]))
def test_models_count_same_branches(instrs, predictor):
    c = cfg(predictor=predictor)
    assert run(instrs, "acc", c).branches == run(instrs, "oneipc", c).branches


@settings(max_examples=20, deadline=None)
@given(st.lists(st.booleans(), min_size=1, max_size=300), st.integers(0, 7),
       st.sampled_from(["tournament", "path_neural", "tage"]))
def test_spaced_branches_train_identically(outcomes, n_pcs, predictor):
    # with four instructions between branches the older one resolves in BR before
    # the younger one is looked up, so ACC's delayed training is never observed
    instrs, i = [], 0
    for k, t in enumerate(outcomes):
        pc = PC0 + 0x100 * (k % (n_pcs + 1))
        instrs.append(TraceInstr(Kind.COND_BRANCH, pc + 4 * i, taken=t, target=pc + 4 * i + 4))
        instrs += alus(4, start=i + 1)
        i += 5
    c = cfg(predictor=predictor)
    assert run(instrs, "acc", c).mispredicts == run(instrs, "oneipc", c).mispredicts


@pytest.mark.parametrize("predictor", ["tournament", "path_neural", "tage"])
def test_back_to_back_branches_train_nearly_identically(predictor):
    # adjacent branches read tables the older branch has not trained yet on ACC
    c = cfg(predictor=predictor)
    tr = gen_branch_pattern(Random(0.5, seed=3), 20000, pad=0)
    acc = run_core(tr, c, model="acc", warmup=0)
    one = run_core(tr, c, model="oneipc", warmup=0)
    assert abs(acc.mispredicts - one.mispredicts) / acc.branches <= 0.01


@pytest.mark.parametrize("model", ["acc", "oneipc"])
def test_deterministic(model):
    instrs = [TraceInstr(Kind.LOAD, PC0 + 4 * i, mem_addr=(i * 7919 % 4096) * 64) for i in range(3000)]
    a = run(instrs, model, cfg(False))
    b = run(instrs, model, cfg(False))
    assert a == b
