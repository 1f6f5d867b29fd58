"""Independent reference models used as test oracles."""
from __future__ import annotations


def stack_lru_misses(lines, n_sets: int, ways: int) -> int:
    """Misses of a set-associative LRU cache by Mattson's stack algorithm.

    Each set keeps a recency stack; an access misses when the line is absent
    or its stack distance is at least ``ways``.
    """
    stacks = [[] for _ in range(n_sets)]
    misses = 0
    for line in lines:
        stack = stacks[line % n_sets]
        try:
            depth = stack.index(line)
        except ValueError:
            depth = None
        if depth is None or depth >= ways:
            misses += 1
        if depth is not None:
            del stack[depth]
        stack.insert(0, line)
    return misses


def lru_victim_oracle(touches, ways: int) -> int:
    """Way an LRU set evicts after ``touches``; untouched ways are older, lowest index first."""
    order = list(range(ways))  # front = least recent
    for w in touches:
        order.remove(w)
        order.append(w)
    return order[0]


def rrip_victim_oracle(rrpv, max_rrpv: int = 3):
    """(victim way, aging passes) for an RRIP set."""
    rrpv = list(rrpv)
    passes = 0
    while max_rrpv not in rrpv:
        rrpv = [v + 1 for v in rrpv]
        passes += 1
    return rrpv.index(max_rrpv), passes
