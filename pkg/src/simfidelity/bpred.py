"""Direction predictors (tournament, path-based neural, TAGE), BTB and RAS.

Every predictor is split into three compiled steps so that both core models
can drive it the same way:

``lookup_k``   reads the tables and writes everything training needs into a
               small ``info`` record; returns the predicted direction.
``history_k``  shifts the outcome into the global/local/path histories.  The
               cores call it right after ``lookup_k`` with the real outcome,
               which equals speculative update with perfect repair: a younger
               branch is only ever predicted behind correctly predicted
               older ones, because fetch stops at a misprediction.
``train_k``    updates counters/weights from ``info``; the pipelined core
               calls it when the branch resolves, the 1-IPC core immediately.
"""
from __future__ import annotations


import numpy as np
from numba import njit

from ._struct import build, define_struct

from .config import PredictorConfig

K_TOURNAMENT, K_NEURAL, K_TAGE, K_PERFECT, K_STATIC = range(5)
KIND_IDS = {"tournament": K_TOURNAMENT, "path_neural": K_NEURAL, "tage": K_TAGE,
            "perfect": K_PERFECT, "static": K_STATIC}

INFO_LEN = 24
NO_TARGET = -1
RING = 512            # global-history ring for TAGE / path ring for the neural predictor
TAGE_U_PERIOD = 1 << 18

(Q_KIND, Q_LH_ENTRIES, Q_LH_BITS, Q_LCTR_MAX, Q_GH_BITS, Q_N_HIST, Q_N_ROWS, Q_W_MAX,
 Q_THETA, Q_BASE_ENTRIES, Q_T_ENTRIES, Q_T_LOG, Q_TAG_BITS, Q_N_TABLES, Q_BTB, Q_RAS) = range(16)
N_Q = 16

PredState = define_struct("PredState", [
    "q", "hist_len",
    # tournament
    "lhist", "lctr", "gctr", "choice", "ghist",
    # neural
    "weights", "path", "path_head", "nhist",
    # TAGE
    "base", "tctr", "ttag", "tu", "use_alt", "ghr", "ghr_pos", "fold", "clock",
    # target prediction
    "btb_tag", "btb_target", "ras", "ras_top", "ras_n",
], __name__)


@njit(cache=True)
def _sat(v, lo, hi):
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


# --- folded history (TAGE) ----------------------------------------------------------

@njit(cache=True)
def _fold_update(comp, new_bit, old_bit, orig_len, comp_len):
    comp = (comp << 1) | new_bit
    comp ^= old_bit << (orig_len % comp_len)
    comp ^= comp >> comp_len
    return comp & ((1 << comp_len) - 1)


@njit(cache=True)
def _tage_index(ps, c, pc, k):
    q = ps.q
    log = q[Q_T_LOG]
    a = pc >> 2
    return (a ^ (a >> (log - k)) ^ ps.fold[c, k, 0] ^ (k * 0x9E5)) & (q[Q_T_ENTRIES] - 1)


@njit(cache=True)
def _tage_tag(ps, c, pc, k):
    a = pc >> 2
    return (a ^ ps.fold[c, k, 1] ^ (ps.fold[c, k, 2] << 1)) & ((1 << ps.q[Q_TAG_BITS]) - 1)


# --- lookup / history / train --------------------------------------------------------

@njit(cache=True)
def lookup_k(ps, c, pc, taken, info):
    q = ps.q
    kind = q[Q_KIND]
    if kind == K_TOURNAMENT:
        li = (pc >> 2) & (q[Q_LH_ENTRIES] - 1)
        lh = ps.lhist[c, li]
        lp = 1 if ps.lctr[c, lh] > q[Q_LCTR_MAX] // 2 else 0
        gi = ps.ghist[c]
        gp = 1 if ps.gctr[c, gi] >= 2 else 0
        pred = gp if ps.choice[c, gi] >= 2 else lp
        info[1] = li
        info[2] = lh
        info[3] = gi
        info[4] = lp
        info[5] = gp
    elif kind == K_NEURAL:
        rows = q[Q_N_ROWS]
        h = q[Q_N_HIST]
        i = (pc >> 2) % rows
        gh = ps.nhist[c]
        head = ps.path_head[c]
        y = np.int64(ps.weights[c, i, 0])
        for j in range(1, h + 1):
            row = ps.path[c, (head - j) % RING]
            wv = np.int64(ps.weights[c, row, j])
            if (gh >> (j - 1)) & 1:
                y += wv
            else:
                y -= wv
        pred = 1 if y >= 0 else 0
        info[1] = i
        info[2] = y
        info[3] = gh
        info[4] = head
    elif kind == K_TAGE:
        n_t = q[Q_N_TABLES]
        bi = (pc >> 2) & (q[Q_BASE_ENTRIES] - 1)
        base_pred = 1 if ps.base[c, bi] >= 2 else 0
        provider = -1
        alt = -1
        for k in range(n_t):
            idx = _tage_index(ps, c, pc, k)
            tag = _tage_tag(ps, c, pc, k)
            info[8 + k] = idx
            info[8 + n_t + k] = tag
            if ps.ttag[c, k, idx] == tag:
                alt = provider
                provider = k
        weak_new = 0
        if provider >= 0:
            pidx = info[8 + provider]
            ctr = ps.tctr[c, provider, pidx]
            prov_pred = 1 if ctr >= 0 else 0
            if alt >= 0:
                alt_pred = 1 if ps.tctr[c, alt, info[8 + alt]] >= 0 else 0
            else:
                alt_pred = base_pred
            # a freshly allocated entry is not trusted while the chooser favours the alternate
            if (ctr == 0 or ctr == -1) and ps.tu[c, provider, pidx] == 0:
                weak_new = 1
            pred = alt_pred if weak_new == 1 and ps.use_alt[c] >= 0 else prov_pred
        else:
            prov_pred = base_pred
            alt_pred = base_pred
            pred = base_pred
        info[1] = bi
        info[2] = provider
        info[3] = alt_pred
        info[4] = prov_pred
        info[5] = weak_new
    elif kind == K_PERFECT:
        pred = taken
    else:
        pred = 0
    info[0] = pred
    return pred


@njit(cache=True)
def history_k(ps, c, pc, taken):
    q = ps.q
    kind = q[Q_KIND]
    t = np.int64(taken)
    if kind == K_TOURNAMENT:
        li = (pc >> 2) & (q[Q_LH_ENTRIES] - 1)
        ps.lhist[c, li] = ((ps.lhist[c, li] << 1) | t) & ((1 << q[Q_LH_BITS]) - 1)
        ps.ghist[c] = ((ps.ghist[c] << 1) | t) & ((1 << q[Q_GH_BITS]) - 1)
    elif kind == K_NEURAL:
        head = ps.path_head[c]
        ps.path[c, head % RING] = (pc >> 2) % q[Q_N_ROWS]
        ps.path_head[c] = head + 1
        ps.nhist[c] = ((ps.nhist[c] << 1) | t) & ((np.int64(1) << q[Q_N_HIST]) - 1)
    elif kind == K_TAGE:
        pos = ps.ghr_pos[c]
        ps.ghr[c, pos % RING] = t
        log = q[Q_T_LOG]
        tb = q[Q_TAG_BITS]
        for k in range(q[Q_N_TABLES]):
            L = ps.hist_len[k]
            old = np.int64(ps.ghr[c, (pos - L) % RING]) if pos >= L else np.int64(0)
            ps.fold[c, k, 0] = _fold_update(ps.fold[c, k, 0], t, old, L, log)
            ps.fold[c, k, 1] = _fold_update(ps.fold[c, k, 1], t, old, L, tb)
            ps.fold[c, k, 2] = _fold_update(ps.fold[c, k, 2], t, old, L, tb - 1)
        ps.ghr_pos[c] = pos + 1


@njit(cache=True)
def train_k(ps, c, taken, info):
    q = ps.q
    kind = q[Q_KIND]
    t = np.int64(taken)
    d = 1 if taken else -1
    if kind == K_TOURNAMENT:
        lh = info[2]
        gi = info[3]
        ps.lctr[c, lh] = _sat(ps.lctr[c, lh] + d, 0, q[Q_LCTR_MAX])
        ps.gctr[c, gi] = _sat(ps.gctr[c, gi] + d, 0, 3)
        lp = info[4]
        gp = info[5]
        if lp != gp:
            ps.choice[c, gi] = _sat(ps.choice[c, gi] + (1 if gp == t else -1), 0, 3)
    elif kind == K_NEURAL:
        y = info[2]
        pred = info[0]
        if pred != t or abs(y) <= q[Q_THETA]:
            wmax = q[Q_W_MAX]
            i = info[1]
            gh = info[3]
            head = info[4]
            ps.weights[c, i, 0] = _sat(ps.weights[c, i, 0] + d, -wmax - 1, wmax)
            for j in range(1, q[Q_N_HIST] + 1):
                row = ps.path[c, (head - j) % RING]
                x = (gh >> (j - 1)) & 1
                step = 1 if x == t else -1
                ps.weights[c, row, j] = _sat(ps.weights[c, row, j] + step, -wmax - 1, wmax)
    elif kind == K_TAGE:
        n_t = q[Q_N_TABLES]
        provider = info[2]
        alt_pred = info[3]
        prov_pred = info[4]
        if provider >= 0:
            idx = info[8 + provider]
            if info[5] == 1 and prov_pred != alt_pred:
                ps.use_alt[c] = _sat(ps.use_alt[c] + (1 if alt_pred == t else -1), -8, 7)
            if prov_pred != alt_pred:
                ps.tu[c, provider, idx] = _sat(ps.tu[c, provider, idx] + (1 if prov_pred == t else -1), 0, 3)
            ps.tctr[c, provider, idx] = _sat(ps.tctr[c, provider, idx] + d, -4, 3)
        else:
            bi = info[1]
            ps.base[c, bi] = _sat(ps.base[c, bi] + d, 0, 3)
        if prov_pred != t and provider < n_t - 1:
            done = False
            for k in range(provider + 1, n_t):
                idx = info[8 + k]
                if ps.tu[c, k, idx] == 0:
                    ps.ttag[c, k, idx] = info[8 + n_t + k]
                    ps.tctr[c, k, idx] = 0 if taken else -1
                    done = True
                    break
            if not done:
                for k in range(provider + 1, n_t):
                    idx = info[8 + k]
                    if ps.tu[c, k, idx] > 0:
                        ps.tu[c, k, idx] -= 1
        ps.clock[c] += 1
        if ps.clock[c] % TAGE_U_PERIOD == 0:
            for k in range(n_t):
                for e in range(q[Q_T_ENTRIES]):
                    ps.tu[c, k, e] >>= 1


# --- BTB / RAS -----------------------------------------------------------------------

@njit(cache=True)
def btb_lookup_k(ps, c, pc):
    i = (pc >> 2) & (ps.q[Q_BTB] - 1)
    if ps.btb_tag[c, i] == pc:
        return ps.btb_target[c, i]
    return NO_TARGET


@njit(cache=True)
def btb_update_k(ps, c, pc, target):
    i = (pc >> 2) & (ps.q[Q_BTB] - 1)
    ps.btb_tag[c, i] = pc
    ps.btb_target[c, i] = target


@njit(cache=True)
def ras_push_k(ps, c, addr):
    depth = ps.q[Q_RAS]
    ps.ras[c, ps.ras_top[c]] = addr
    ps.ras_top[c] = (ps.ras_top[c] + 1) % depth
    if ps.ras_n[c] < depth:
        ps.ras_n[c] += 1


@njit(cache=True)
def ras_pop_k(ps, c):
    if ps.ras_n[c] == 0:
        return NO_TARGET
    depth = ps.q[Q_RAS]
    ps.ras_top[c] = (ps.ras_top[c] - 1) % depth
    ps.ras_n[c] -= 1
    return ps.ras[c, ps.ras_top[c]]


# --- combined front-end/back-end hooks used by the cores -----------------------------

@njit(cache=True)
def predict_branch_k(ps, c, is_cond, pc, taken, target, is_call, is_return, info):
    """Predict a control instruction; returns (direction_wrong, needs_redirect)."""
    if is_cond:
        pdir = lookup_k(ps, c, pc, taken, info)
        history_k(ps, c, pc, taken)
    else:
        pdir = 1
        info[0] = 1
    if is_return:
        ptarget = ras_pop_k(ps, c)
    else:
        ptarget = btb_lookup_k(ps, c, pc)
    if is_call:
        ras_push_k(ps, c, pc + 4)
    wrong = pdir != taken
    redirect = wrong or (taken != 0 and ptarget != target)
    return wrong, redirect


@njit(cache=True)
def resolve_branch_k(ps, c, is_cond, pc, taken, target, is_return, info):
    if is_cond:
        train_k(ps, c, taken, info)
    if taken and not is_return:
        btb_update_k(ps, c, pc, target)


# --- construction ----------------------------------------------------------------------

def neural_theta(h: int) -> int:
    return int(1.93 * h + 14)


def new_pred_state(cfg: PredictorConfig, n_cores: int) -> PredState:
    q = np.zeros(N_Q, dtype=np.int64)
    q[Q_KIND] = KIND_IDS[cfg.kind]
    q[Q_LH_ENTRIES] = cfg.local_history_entries
    q[Q_LH_BITS] = cfg.local_history_bits
    q[Q_LCTR_MAX] = (1 << cfg.local_counter_bits) - 1
    q[Q_GH_BITS] = cfg.global_history_bits
    q[Q_N_HIST] = cfg.neural_history
    q[Q_N_ROWS] = cfg.neural_rows
    q[Q_W_MAX] = (1 << (cfg.neural_weight_bits - 1)) - 1
    q[Q_THETA] = neural_theta(cfg.neural_history)
    q[Q_BASE_ENTRIES] = cfg.tage_base_entries
    q[Q_T_ENTRIES] = cfg.tage_entries
    q[Q_T_LOG] = cfg.tage_entries.bit_length() - 1
    q[Q_TAG_BITS] = cfg.tage_tag_bits
    q[Q_N_TABLES] = len(cfg.tage_histories)
    q[Q_BTB] = cfg.btb_entries
    q[Q_RAS] = cfg.ras_depth
    n = n_cores
    kind = cfg.kind
    # tables of predictors that are not selected stay tiny
    lh_n = cfg.local_history_entries if kind == "tournament" else 1
    lc_n = 1 << cfg.local_history_bits if kind == "tournament" else 1
    g_n = 1 << cfg.global_history_bits if kind == "tournament" else 1
    rows = cfg.neural_rows if kind == "path_neural" else 1
    h1 = cfg.neural_history + 1 if kind == "path_neural" else 1
    tage = kind == "tage"
    n_t = len(cfg.tage_histories)
    t_e = cfg.tage_entries if tage else 1
    b_e = cfg.tage_base_entries if tage else 1
    return build(PredState,
        q=q,
        hist_len=np.array(cfg.tage_histories, dtype=np.int64),
        lhist=np.zeros((n, lh_n), dtype=np.int64),
        lctr=np.full((n, lc_n), (1 << cfg.local_counter_bits) // 2 - 1, dtype=np.int8),
        gctr=np.ones((n, g_n), dtype=np.int8),
        choice=np.ones((n, g_n), dtype=np.int8),
        ghist=np.zeros(n, dtype=np.int64),
        weights=np.zeros((n, rows, h1), dtype=np.int8),
        path=np.zeros((n, RING), dtype=np.int64),
        path_head=np.zeros(n, dtype=np.int64),
        nhist=np.zeros(n, dtype=np.int64),
        base=np.ones((n, b_e), dtype=np.int8),
        tctr=np.zeros((n, n_t, t_e), dtype=np.int8),
        ttag=np.full((n, n_t, t_e), -1, dtype=np.int64),
        tu=np.zeros((n, n_t, t_e), dtype=np.int8),
        use_alt=np.zeros(n, dtype=np.int64),
        ghr=np.zeros((n, RING), dtype=np.int8),
        ghr_pos=np.zeros(n, dtype=np.int64),
        fold=np.zeros((n, n_t, 3), dtype=np.int64),
        clock=np.zeros(n, dtype=np.int64),
        btb_tag=np.full((n, cfg.btb_entries), -1, dtype=np.int64),
        btb_target=np.zeros((n, cfg.btb_entries), dtype=np.int64),
        ras=np.zeros((n, cfg.ras_depth), dtype=np.int64),
        ras_top=np.zeros(n, dtype=np.int64),
        ras_n=np.zeros(n, dtype=np.int64),
    )


class BranchPredictor:
    """One core's predictor, BTB and RAS behind a plain predict/update interface.

    ``predict`` is a pure read.  ``update`` trains on the committed outcome,
    reusing the lookup made by the matching ``predict`` when there is one.
    """

    def __init__(self, cfg: PredictorConfig = None, state: PredState = None, core: int = 0):
        self.cfg = cfg or PredictorConfig()
        self.state = state if state is not None else new_pred_state(self.cfg, 1)
        self.core = core
        self._pending = {}

    def predict(self, pc: int):
        info = np.zeros(INFO_LEN, dtype=np.int64)
        taken = bool(lookup_k(self.state, self.core, pc, 0, info))
        self._pending[pc] = info
        target = int(btb_lookup_k(self.state, self.core, pc))
        return taken, (None if target == NO_TARGET else target)

    def update(self, pc: int, taken: bool, target: int = None) -> bool:
        """Train on one conditional branch outcome; returns whether it was mispredicted."""
        info = self._pending.pop(pc, None)
        if info is None:
            info = np.zeros(INFO_LEN, dtype=np.int64)
            lookup_k(self.state, self.core, pc, int(taken), info)
        history_k(self.state, self.core, pc, int(taken))
        train_k(self.state, self.core, int(taken), info)
        if taken and target is not None:
            btb_update_k(self.state, self.core, pc, target)
        return bool(info[0]) != bool(taken)

    def ras_push(self, addr: int) -> None:
        ras_push_k(self.state, self.core, addr)

    def ras_pop(self):
        v = int(ras_pop_k(self.state, self.core))
        return None if v == NO_TARGET else v

    def storage_bytes(self) -> float:
        return self.cfg.storage_bits() / 8


def mispredict_rate(stats) -> float:
    """Conditional-branch misprediction rate from anything with branches/mispredicts."""
    if isinstance(stats, dict):
        branches, mispredicts = stats["branches"], stats["mispredicts"]
    else:
        branches, mispredicts = stats.branches, stats.mispredicts
    if branches <= 0:
        raise ValueError("no conditional branches: misprediction rate undefined")
    return mispredicts / branches
