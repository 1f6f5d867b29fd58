"""Compiled core models and the global cycle loop.

Both models share one driver.  Cycles are numbered from 1.  Every core has a
``next_time``; the loop takes the smallest, then steps every core due at that
cycle in index order, so memory requests reach the shared hierarchy in global
(cycle, core) order.

ACC pipeline: stages F1 F2 BP DEC CRACK | RF BR MEM EXE, and leaving EXE is
write-back/commit.  Each cycle stages are visited back to front; an occupant
whose work is done moves on when the next latch is free (freed earlier in the
same cycle counts).  F1 waits for the I-fetch, MEM for the D-access.  The
direction predictor is read when a branch enters BP; a wrong direction or a
missing/wrong target squashes F1/F2 and stops fetch until the branch enters
BR, after which fetch restarts the next cycle (six bubbles).  A Complex
instruction holds CRACK while it emits one micro-op per cycle; only the last
micro-op commits.

1-IPC: an instruction is fetched, executed and committed in one cycle unless
its I-fetch or D-access misses, in which case it waits for the full latency.
The predictor is consulted and trained at once, with no penalty.

Measurement protocol: every thread has a list of gates (the begin marker,
then fork-join barriers).  A thread stops fetching at a gate and arrives when
the instruction before it commits; when all threads have arrived the gate
opens one cycle after the last arrival.  The begin gate opens the measured
window (start R, plus a seed-derived per-core start offset).  Multiprogrammed
threads that run off the end restart from index 0; the window closes at E,
when every thread has committed its last instruction once.
"""
from __future__ import annotations


import numpy as np
from numba import njit

from .._struct import build, define_struct

from .. import bpred
from .. import mem

ALU, LOAD, STORE, COND_BRANCH, JUMP, COMPLEX = range(6)
F_CALL, F_RETURN = 1, 2

F1, F2, BP, DEC, CRACK, RF, BR, MEMS, EXE = range(9)
N_STAGES = 9

MODEL_ACC, MODEL_ONEIPC = 0, 1
INF = np.int64(1) << 62
BRING = 16

# per-core statistics
S_INSTRS, S_BRANCHES, S_MISPRED, S_FLUSHES, S_UOPS, S_BR_SEEN, S_JUMPS = range(7)
N_STATS = 7

# scalar parameters
R_MODEL, R_RESTART, R_WARMUP, R_NGATES, R_NCORES = range(5)
N_R = 5

# global registers
G_T, G_R, G_E, G_STATUS = range(4)
STATUS_RUNNING, STATUS_DONE, STATUS_DEADLOCK = 0, 1, 2

SysState = define_struct("SysState", [
    "r", "g",
    "tk", "tpc", "taddr", "ttaken", "ttarget", "tcrack", "tflags", "toff", "tlen",
    "gate_idx", "gate_ptr", "arrival", "jitter",
    "st_idx", "st_busy", "st_last", "crack_left",
    "fetch_pos", "wrapped", "redirect_wait", "fetch_resume",
    "next_time", "phase", "cur_idx", "last_commit", "completed_at",
    "binfo", "bwarm", "bredir",
    "stats", "stats0", "ctr0",
], __name__)


# --- shared bookkeeping -------------------------------------------------------------

@njit(cache=True)
def _in_window(ss, t):
    return ss.g[G_R] >= 0 and t > ss.g[G_R]


@njit(cache=True)
def _commit(ss, c, idx, t):
    ss.stats[c, S_INSTRS] += 1
    ss.last_commit[c] = t
    ptr = ss.gate_ptr[c]
    if ptr < ss.r[R_NGATES] and ss.arrival[c] < 0 and idx == ss.gate_idx[c, ptr] - 1 \
            and ss.wrapped[c] == 0:
        ss.arrival[c] = t
    if ss.completed_at[c] < 0 and idx == ss.tlen[c] - 1:
        ss.completed_at[c] = t


@njit(cache=True)
def _can_fetch(ss, c, t):
    """Whether core ``c`` may fetch at ``t``; wraps the fetch position on restart."""
    if ss.redirect_wait[c] >= 0 or t < ss.fetch_resume[c]:
        return False
    pos = ss.fetch_pos[c]
    if pos >= ss.tlen[c]:
        if ss.r[R_RESTART] == 0 or ss.tlen[c] == 0:
            return False
        ss.fetch_pos[c] = 0
        ss.wrapped[c] = 1
        pos = 0
    ptr = ss.gate_ptr[c]
    if ss.wrapped[c] == 0 and ptr < ss.r[R_NGATES] and pos == ss.gate_idx[c, ptr]:
        return False
    return True


@njit(cache=True)
def _try_release(ss, ms):
    n = ss.r[R_NCORES]
    ptr = ss.gate_ptr[0]
    if ptr >= ss.r[R_NGATES]:
        return
    rel = 0
    for c in range(n):
        if ss.arrival[c] < 0:
            return
        if ss.arrival[c] > rel:
            rel = ss.arrival[c]
    for c in range(n):
        ss.gate_ptr[c] += 1
        ss.arrival[c] = -1
        start = rel + 1
        if ptr == 0:
            start += ss.jitter[c]
        ss.fetch_resume[c] = start
        if ss.next_time[c] > start:
            ss.next_time[c] = start
    if ptr == 0:
        ss.g[G_R] = rel
        for c in range(n):
            for k in range(N_STATS):
                ss.stats0[c, k] = ss.stats[c, k]
            for k in range(ms.ctr.shape[1]):
                ss.ctr0[c, k] = ms.ctr[c, k]


@njit(cache=True)
def _predict(ss, ps, c, idx, t):
    """Front-end prediction; returns whether fetch must be redirected."""
    k = ss.tk[ss.toff[c] + idx]
    o = ss.toff[c] + idx
    slot = idx % BRING
    info = ss.binfo[c, slot]
    is_cond = k == COND_BRANCH
    fl = ss.tflags[o]
    wrong, redirect = bpred.predict_branch_k(ps, c, is_cond, ss.tpc[o], np.int64(ss.ttaken[o]),
                                             ss.ttarget[o], (fl & F_CALL) != 0,
                                             (fl & F_RETURN) != 0, info)
    warm = 0
    if is_cond:
        warm = 1 if ss.stats[c, S_BR_SEEN] >= ss.r[R_WARMUP] else 0
        ss.stats[c, S_BR_SEEN] += 1
    ss.bwarm[c, slot] = warm * (2 if wrong else 1)
    ss.bredir[c, slot] = 1 if redirect else 0
    return redirect


@njit(cache=True)
def _resolve(ss, ps, c, idx, t):
    o = ss.toff[c] + idx
    k = ss.tk[o]
    slot = idx % BRING
    is_cond = k == COND_BRANCH
    bpred.resolve_branch_k(ps, c, is_cond, ss.tpc[o], np.int64(ss.ttaken[o]), ss.ttarget[o],
                           (ss.tflags[o] & F_RETURN) != 0, ss.binfo[c, slot])
    if _in_window(ss, t):
        if is_cond and ss.bwarm[c, slot] > 0:
            ss.stats[c, S_BRANCHES] += 1
            if ss.bwarm[c, slot] == 2:
                ss.stats[c, S_MISPRED] += 1
        elif k == JUMP:
            ss.stats[c, S_JUMPS] += 1
        if ss.bredir[c, slot] != 0:
            ss.stats[c, S_FLUSHES] += 1


# --- ACC ------------------------------------------------------------------------------

@njit(cache=True)
def _acc_enter(ss, ms, ps, c, s, idx, t):
    """Place instruction ``idx`` into stage ``s`` at cycle ``t``."""
    o = ss.toff[c] + idx
    ss.st_idx[c, s] = idx
    ss.st_busy[c, s] = t
    k = ss.tk[o]
    if s == BP:
        if (k == COND_BRANCH or k == JUMP) and ss.st_last[c, s] != 0:
            if _predict(ss, ps, c, idx, t):
                ss.st_idx[c, F1] = -1
                ss.st_idx[c, F2] = -1
                ss.fetch_pos[c] = idx + 1
                ss.redirect_wait[c] = idx
    elif s == CRACK:
        ss.crack_left[c] = ss.tcrack[o] if k == COMPLEX else 1
    elif s == BR:
        if (k == COND_BRANCH or k == JUMP) and ss.st_last[c, s] != 0:
            _resolve(ss, ps, c, idx, t)
            if ss.redirect_wait[c] == idx:
                ss.redirect_wait[c] = -1
                ss.fetch_resume[c] = t + 1
    elif s == MEMS:
        if k == LOAD or k == STORE:
            lat = mem.access_k(ms, c, k, ss.taddr[o], t)
            ss.st_busy[c, s] = t + lat - 1


@njit(cache=True)
def acc_step_k(ss, ms, ps, c, t):
    moved = False
    # leaving EXE is write-back: commit
    if ss.st_idx[c, EXE] >= 0 and ss.st_busy[c, EXE] < t:
        if ss.st_last[c, EXE] != 0:
            _commit(ss, c, ss.st_idx[c, EXE], t)
        ss.stats[c, S_UOPS] += 1
        ss.st_idx[c, EXE] = -1
        moved = True
    for s in range(EXE - 1, -1, -1):
        idx = ss.st_idx[c, s]
        if idx < 0 or ss.st_busy[c, s] >= t or ss.st_idx[c, s + 1] >= 0:
            continue
        if s == CRACK and ss.crack_left[c] > 1:
            # emit a non-final micro-op, keep cracking
            ss.crack_left[c] -= 1
            ss.st_last[c, RF] = 0
            _acc_enter(ss, ms, ps, c, RF, idx, t)
            moved = True
            continue
        ss.st_last[c, s + 1] = ss.st_last[c, s]
        ss.st_idx[c, s] = -1
        _acc_enter(ss, ms, ps, c, s + 1, idx, t)
        moved = True
    if ss.st_idx[c, F1] < 0 and _can_fetch(ss, c, t):
        idx = ss.fetch_pos[c]
        ss.fetch_pos[c] = idx + 1
        o = ss.toff[c] + idx
        lat = mem.access_k(ms, c, mem.IFETCH, ss.tpc[o], t)
        ss.st_idx[c, F1] = idx
        ss.st_last[c, F1] = 1
        ss.st_busy[c, F1] = t + lat - 1
        moved = True
    if moved:
        ss.next_time[c] = t + 1
        return
    nt = INF
    for s in range(N_STAGES):
        # stages already done are only waiting for a busy stage downstream
        if ss.st_idx[c, s] >= 0 and ss.st_busy[c, s] >= t and ss.st_busy[c, s] + 1 < nt:
            nt = ss.st_busy[c, s] + 1
    if ss.st_idx[c, F1] < 0 and ss.redirect_wait[c] < 0 and ss.fetch_resume[c] > t \
            and ss.fetch_resume[c] < nt:
        nt = ss.fetch_resume[c]
    if nt <= t:
        nt = t + 1
    ss.next_time[c] = nt


# --- 1-IPC ---------------------------------------------------------------------------

@njit(cache=True)
def _oneipc_finish(ss, c, idx, ct):
    _commit(ss, c, idx, ct)
    ss.phase[c] = 0
    ss.next_time[c] = ct + 1


@njit(cache=True)
def oneipc_step_k(ss, ms, ps, c, t):
    if ss.phase[c] == 1:
        idx = ss.cur_idx[c]
        o = ss.toff[c] + idx
        ld = mem.access_k(ms, c, ss.tk[o], ss.taddr[o], t)
        _oneipc_finish(ss, c, idx, t + ld - 1)
        return
    if not _can_fetch(ss, c, t):
        ss.next_time[c] = ss.fetch_resume[c] if ss.fetch_resume[c] > t else INF
        return
    idx = ss.fetch_pos[c]
    ss.fetch_pos[c] = idx + 1
    o = ss.toff[c] + idx
    k = ss.tk[o]
    li = mem.access_k(ms, c, mem.IFETCH, ss.tpc[o], t)
    ss.stats[c, S_UOPS] += ss.tcrack[o]
    if k == COND_BRANCH or k == JUMP:
        _predict(ss, ps, c, idx, t)
        _resolve(ss, ps, c, idx, t)
    if k == LOAD or k == STORE:
        td = t + li - 1
        if td == t:
            ld = mem.access_k(ms, c, k, ss.taddr[o], t)
            _oneipc_finish(ss, c, idx, t + ld - 1)
        else:
            ss.phase[c] = 1
            ss.cur_idx[c] = idx
            ss.next_time[c] = td
        return
    _oneipc_finish(ss, c, idx, t + li - 1 + ss.tcrack[o] - 1)


# --- driver --------------------------------------------------------------------------

@njit(cache=True)
def run_k(ss, ms, ps, t_stop):
    """Advance the system until it finishes or the next event lies beyond ``t_stop``."""
    n = ss.r[R_NCORES]
    model = ss.r[R_MODEL]
    _try_release(ss, ms)
    while True:
        t = INF
        for c in range(n):
            if ss.next_time[c] < t:
                t = ss.next_time[c]
        e = ss.g[G_E]
        if t >= INF or (e >= 0 and t > e):
            if e < 0:
                ss.g[G_STATUS] = STATUS_DEADLOCK
            else:
                ss.g[G_STATUS] = STATUS_DONE
            return ss.g[G_STATUS]
        if t > t_stop:
            return STATUS_RUNNING
        ss.g[G_T] = t
        for c in range(n):
            if ss.next_time[c] != t:
                continue
            if model == MODEL_ACC:
                acc_step_k(ss, ms, ps, c, t)
            else:
                oneipc_step_k(ss, ms, ps, c, t)
            _try_release(ss, ms)
        if ss.g[G_E] < 0:
            done = True
            e = 0
            for c in range(n):
                if ss.completed_at[c] < 0:
                    done = False
                    break
                if ss.completed_at[c] > e:
                    e = ss.completed_at[c]
            if done:
                ss.g[G_E] = e


@njit(cache=True)
def finalize_k(ss, ms, out_stats, out_ctr):
    """Windowed per-core statistics: commits after the window closes are removed."""
    e = ss.g[G_E]
    for c in range(ss.r[R_NCORES]):
        for k in range(N_STATS):
            out_stats[c, k] = ss.stats[c, k] - ss.stats0[c, k]
        for k in range(ms.ctr.shape[1]):
            out_ctr[c, k] = ms.ctr[c, k] - ss.ctr0[c, k]
        if ss.r[R_MODEL] == MODEL_ONEIPC and ss.last_commit[c] > e:
            out_stats[c, S_INSTRS] -= 1


def new_sys_state(traces, model: int, gates, jitter, restart: bool, warmup: int) -> SysState:
    """Flatten per-thread traces and set up an idle system."""
    n = len(traces)
    lens = np.array([len(t) for t in traces], dtype=np.int64)
    off = np.zeros(n, dtype=np.int64)
    if n > 1:
        off[1:] = np.cumsum(lens)[:-1]

    def cat(name, dtype):
        if n == 0 or lens.sum() == 0:
            return np.zeros(1, dtype=dtype)
        return np.concatenate([getattr(t, name) for t in traces]).astype(dtype)

    n_gates = len(gates[0]) if n else 0
    if n and n_gates == 0:
        raise ValueError("every thread needs at least the begin gate")
    r = np.zeros(N_R, dtype=np.int64)
    r[R_MODEL] = model
    r[R_RESTART] = int(restart)
    r[R_WARMUP] = warmup
    r[R_NGATES] = n_gates
    r[R_NCORES] = n
    g = np.zeros(4, dtype=np.int64)
    g[G_R] = -1
    g[G_E] = -1
    gate_idx = np.array(gates, dtype=np.int64).reshape(n, max(n_gates, 1)) if n_gates else \
        np.zeros((n, 1), dtype=np.int64)
    arrival = np.full(n, -1, dtype=np.int64)
    for c in range(n):
        if n_gates and gate_idx[c, 0] == 0:
            arrival[c] = 0
    completed = np.full(n, -1, dtype=np.int64)
    completed[lens == 0] = 0
    return build(SysState,
        r=r, g=g,
        tk=cat("kind", np.int64), tpc=cat("pc", np.int64), taddr=cat("addr", np.int64),
        ttaken=cat("taken", np.int64), ttarget=cat("target", np.int64),
        tcrack=cat("crack", np.int64), tflags=cat("flags", np.int64),
        toff=off, tlen=lens,
        gate_idx=gate_idx, gate_ptr=np.zeros(n, dtype=np.int64), arrival=arrival,
        jitter=np.asarray(jitter, dtype=np.int64),
        st_idx=np.full((n, N_STAGES), -1, dtype=np.int64),
        st_busy=np.zeros((n, N_STAGES), dtype=np.int64),
        st_last=np.ones((n, N_STAGES), dtype=np.int64),
        crack_left=np.zeros(n, dtype=np.int64),
        fetch_pos=np.zeros(n, dtype=np.int64),
        wrapped=np.zeros(n, dtype=np.int64),
        redirect_wait=np.full(n, -1, dtype=np.int64),
        fetch_resume=np.ones(n, dtype=np.int64),
        next_time=np.ones(n, dtype=np.int64),
        phase=np.zeros(n, dtype=np.int64),
        cur_idx=np.zeros(n, dtype=np.int64),
        last_commit=np.zeros(n, dtype=np.int64),
        completed_at=completed,
        binfo=np.zeros((n, BRING, bpred.INFO_LEN), dtype=np.int64),
        bwarm=np.zeros((n, BRING), dtype=np.int64),
        bredir=np.zeros((n, BRING), dtype=np.int64),
        stats=np.zeros((n, N_STATS), dtype=np.int64),
        stats0=np.zeros((n, N_STATS), dtype=np.int64),
        ctr0=np.zeros((n, mem.N_CORE_CTR), dtype=np.int64),
    )
