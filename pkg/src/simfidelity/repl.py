"""L2 replacement policies: true LRU, TADIP and TADRRIP with thread-aware set dueling.

The ``*_k`` functions are compiled kernels over plain arrays; the L2 in
``mem.py`` calls them directly.  ``PolicyState`` wraps the same arrays for use
from Python.

Set-dueling polarity: each core owns two SDMs, variant 0 (MRU insertion for
DIP, static RRPV=2 for DRRIP) and variant 1 (bimodal).  A miss by the owning
core in a variant-0 leader increments that core's PSEL, a miss in a variant-1
leader decrements it; followers use variant 1 when the PSEL MSB is set.
"""
from __future__ import annotations

import numpy as np
from numba import njit

POLICY_LRU = 0
POLICY_DIP = 1
POLICY_DRRIP = 2
POLICY_IDS = {"lru": POLICY_LRU, "dip": POLICY_DIP, "drrip": POLICY_DRRIP}

RRPV_MAX = 3
RRPV_STATIC = 2
FOLLOWER = -1


# --- RNG: xorshift64* on a one-element uint64 array ---------------------------

@njit(cache=True)
def rng_next(state):
    x = state[0]
    x ^= x >> np.uint64(12)
    x ^= x << np.uint64(25)
    x ^= x >> np.uint64(27)
    state[0] = x
    return x * np.uint64(2685821657736338717)


@njit(cache=True)
def rng_bernoulli(state, threshold):
    """True with probability threshold / 2**32."""
    return (rng_next(state) >> np.uint64(32)) < np.uint64(threshold)


def seed_state(seed: int) -> np.ndarray:
    # splitmix64 finaliser so nearby seeds give unrelated streams; never zero
    z = (seed + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    z ^= z >> 31
    return np.array([z or 1], dtype=np.uint64)


def epsilon_threshold(eps: float) -> int:
    return int(round(eps * (1 << 32)))


# --- true LRU: rank 0 is MRU, rank ways-1 is LRU -------------------------------

@njit(cache=True)
def lru_touch_k(rank, way):
    r = rank[way]
    for w in range(rank.shape[0]):
        if rank[w] < r:
            rank[w] += 1
    rank[way] = 0


@njit(cache=True)
def lru_victim_k(rank):
    best = 0
    for w in range(1, rank.shape[0]):
        if rank[w] > rank[best]:
            best = w
    return best


def lru_init(n_sets: int, ways: int) -> np.ndarray:
    # way 0 starts as LRU so an untouched set evicts lowest index first
    return np.tile(np.arange(ways - 1, -1, -1, dtype=np.int16), (n_sets, 1))


# --- MRU-bit approximation of LRU (DIP) ----------------------------------------

@njit(cache=True)
def mru_touch_k(bits, way):
    bits[way] = 1
    for w in range(bits.shape[0]):
        if bits[w] == 0:
            return
    for w in range(bits.shape[0]):
        if w != way:
            bits[w] = 0


@njit(cache=True)
def mru_victim_k(bits):
    for w in range(bits.shape[0]):
        if bits[w] == 0:
            return w
    return 0


# --- RRIP ---------------------------------------------------------------------

@njit(cache=True)
def rrip_victim_k(rrpv):
    """Leftmost way at RRPV_MAX, aging the whole set until one exists."""
    while True:
        for w in range(rrpv.shape[0]):
            if rrpv[w] >= RRPV_MAX:
                return w
        for w in range(rrpv.shape[0]):
            rrpv[w] += 1


# --- set dueling --------------------------------------------------------------

@njit(cache=True)
def insertion_variant_k(leader, psel, psel_msb, set_idx, core):
    sdm = leader[set_idx]
    if sdm >= 0 and sdm // 2 == core:
        return sdm % 2
    return 1 if psel[core] >= psel_msb else 0


@njit(cache=True)
def psel_update_k(leader, psel, psel_max, set_idx, core):
    """Train ``core``'s PSEL on a miss it suffered in ``set_idx``."""
    sdm = leader[set_idx]
    if sdm < 0 or sdm // 2 != core:
        return
    if sdm % 2 == 0:
        if psel[core] < psel_max:
            psel[core] += 1
    elif psel[core] > 0:
        psel[core] -= 1


def assign_leader_sets(n_sets: int, n_sdm: int, sets_per_sdm: int, scheme: str = "stride") -> np.ndarray:
    """Map each set to its SDM index, or FOLLOWER.

    Stride scheme: with stride = min(2 * n_sdm, n_sets // sets_per_sdm), set s
    leads SDM k iff s % stride == k and s // stride < sets_per_sdm.
    """
    if scheme != "stride":
        raise ValueError(f"unknown leader scheme {scheme!r}")
    stride = min(2 * n_sdm, n_sets // sets_per_sdm)
    if n_sdm * sets_per_sdm > n_sets or stride < n_sdm:
        raise ValueError(f"{n_sdm} SDMs x {sets_per_sdm} sets do not fit in {n_sets} sets")
    leader = np.full(n_sets, FOLLOWER, dtype=np.int32)
    s = np.arange(n_sets)
    sdm = s % stride
    mask = (sdm < n_sdm) & (s // stride < sets_per_sdm)
    leader[mask] = sdm[mask]
    return leader


# --- per-policy hooks used by the L2 --------------------------------------------

@njit(cache=True)
def on_hit_k(policy, rank, mru, rrpv, s, w):
    if policy == POLICY_LRU:
        lru_touch_k(rank[s], w)
    elif policy == POLICY_DIP:
        mru_touch_k(mru[s], w)
    else:
        rrpv[s, w] = 0


@njit(cache=True)
def victim_k(policy, rank, mru, rrpv, s):
    if policy == POLICY_LRU:
        return lru_victim_k(rank[s])
    if policy == POLICY_DIP:
        return mru_victim_k(mru[s])
    return rrip_victim_k(rrpv[s])


@njit(cache=True)
def on_fill_k(policy, rank, mru, rrpv, leader, psel, psel_msb, rng, eps_thr, s, w, core):
    """Install metadata for a newly filled line; returns the variant used (or -1 for LRU)."""
    if policy == POLICY_LRU:
        lru_touch_k(rank[s], w)
        return -1
    variant = insertion_variant_k(leader, psel, psel_msb, s, core)
    if policy == POLICY_DIP:
        if variant == 0 or rng_bernoulli(rng, eps_thr):
            mru_touch_k(mru[s], w)
        else:
            mru[s, w] = 0
    else:
        if variant == 0 or rng_bernoulli(rng, eps_thr):
            rrpv[s, w] = RRPV_STATIC
        else:
            rrpv[s, w] = RRPV_MAX
    return variant


@njit(cache=True)
def on_miss_k(policy, leader, psel, psel_max, s, core):
    if policy != POLICY_LRU:
        psel_update_k(leader, psel, psel_max, s, core)


class PolicyState:
    """Replacement metadata for one cache, usable outside the simulator."""

    def __init__(self, n_sets: int, ways: int, policy: str = "lru", n_cores: int = 4,
                 epsilon: float = 1 / 32, psel_bits: int = 10, sets_per_sdm: int = 32,
                 seed: int = 0, leader=None):
        self.policy = policy
        self.policy_id = POLICY_IDS[policy]
        self.ways = ways
        self.rank = lru_init(n_sets, ways)
        self.mru = np.zeros((n_sets, ways), dtype=np.int8)
        self.rrpv = np.full((n_sets, ways), RRPV_MAX, dtype=np.int8)
        self.psel_max = (1 << psel_bits) - 1
        self.psel_msb = 1 << (psel_bits - 1)
        self.psel = np.full(n_cores, self.psel_msb, dtype=np.int32)
        if leader is not None:
            self.leader = np.asarray(leader, dtype=np.int32)
        elif self.policy_id == POLICY_LRU:
            self.leader = np.full(n_sets, FOLLOWER, dtype=np.int32)
        else:
            self.leader = assign_leader_sets(n_sets, 2 * n_cores, sets_per_sdm)
        self.rng = seed_state(seed)
        self.eps_thr = epsilon_threshold(epsilon)

    def lru_touch(self, s: int, way: int) -> None:
        lru_touch_k(self.rank[s], way)

    def lru_victim(self, s: int) -> int:
        return int(lru_victim_k(self.rank[s]))

    def rrip_victim(self, s: int) -> int:
        return int(rrip_victim_k(self.rrpv[s]))

    def dip_insert(self, s: int, core: int) -> str:
        """Decide the insertion position ('MRU' or 'LRU') for a fill by ``core``."""
        variant = insertion_variant_k(self.leader, self.psel, self.psel_msb, s, core)
        if variant == 0 or rng_bernoulli(self.rng, self.eps_thr):
            return "MRU"
        return "LRU"

    def drrip_insert_rrpv(self, s: int, core: int) -> int:
        variant = insertion_variant_k(self.leader, self.psel, self.psel_msb, s, core)
        if variant == 0 or rng_bernoulli(self.rng, self.eps_thr):
            return RRPV_STATIC
        return RRPV_MAX

    def dip_psel_update(self, s: int, core: int, miss: bool = True) -> None:
        if miss:
            psel_update_k(self.leader, self.psel, self.psel_max, s, core)

    def on_hit(self, s: int, way: int) -> None:
        on_hit_k(self.policy_id, self.rank, self.mru, self.rrpv, s, way)

    def on_fill(self, s: int, way: int, core: int) -> int:
        return int(on_fill_k(self.policy_id, self.rank, self.mru, self.rrpv, self.leader, self.psel,
                             self.psel_msb, self.rng, self.eps_thr, s, way, core))

    def victim(self, s: int) -> int:
        return int(victim_k(self.policy_id, self.rank, self.mru, self.rrpv, s))
