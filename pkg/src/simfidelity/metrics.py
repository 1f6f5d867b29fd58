"""Run metrics (MPKI, TTP, WSU) and the statistics used to compare core models.

Improvement ratios and their geometric means are treated as Normal variables
through a first-order Taylor expansion, which is only trustworthy while the
coefficients of variation stay small.
"""
from __future__ import annotations

import enum
import math
import statistics
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

Z80 = 1.28
CV_WARN = 0.2


class ApproximationWarning(UserWarning):
    """A coefficient of variation is too large for the first-order approximation."""


def mpki(l2_misses, instrs) -> float:
    """L2 misses per thousand committed instructions.

    For a multiprogrammed run pass the sums over cores.
    """
    if instrs <= 0:
        raise ValueError("mpki: no committed instructions")
    return 1000.0 * l2_misses / instrs


def ttp(ipcs: Sequence[float]) -> float:
    return float(sum(ipcs))


def wsu(ipcs: Sequence[float], single_ipcs: Sequence[float]) -> float:
    if len(ipcs) != len(single_ipcs):
        raise ValueError(f"wsu: {len(ipcs)} IPCs but {len(single_ipcs)} baselines")
    total = 0.0
    for ipc, base in zip(ipcs, single_ipcs):
        if base <= 0:
            raise ValueError("wsu: single-core baseline IPC must be positive")
        total += ipc / base
    return total


def normalized_distance(x, y) -> float:
    """Euclidean distance between ``x`` and ``y`` after scaling both to unit norm."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"normalized_distance: shapes {x.shape} and {y.shape} differ")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("normalized_distance: zero vector")
    return float(np.linalg.norm(x / nx - y / ny))


@dataclass(frozen=True)
class NormalDist:
    mu: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "NormalDist":
        """Sample mean and (n-1) standard deviation; a single sample has sigma 0."""
        samples = [float(s) for s in samples]
        if not samples:
            raise ValueError("no samples")
        sd = statistics.stdev(samples) if len(samples) > 1 else 0.0
        return cls(statistics.fmean(samples), sd)

    @property
    def cv(self) -> float:
        return self.sigma / abs(self.mu) if self.mu else math.inf

    def coverage(self, z: float = Z80) -> float:
        """Probability mass inside mu +- z*sigma."""
        std = statistics.NormalDist()
        return std.cdf(z) - std.cdf(-z)


def _check_cv(d: NormalDist, what: str) -> None:
    if d.cv > CV_WARN:
        warnings.warn(f"{what}: coefficient of variation {d.cv:.3f} exceeds {CV_WARN}; "
                      "the Normal approximation is unreliable", ApproximationWarning, stacklevel=3)


def ratio_dist(x: NormalDist, y: NormalDist) -> NormalDist:
    """Distribution of x/y for independent, nearly deterministic x and y."""
    if y.mu == 0:
        raise ZeroDivisionError("ratio_dist: mean of the denominator is zero")
    _check_cv(x, "ratio_dist numerator")
    _check_cv(y, "ratio_dist denominator")
    mu = x.mu / y.mu
    if x.mu == 0:
        # the relative form is undefined; first order in delta(x) gives sigma(x)/mu(y)
        return NormalDist(0.0, abs(x.sigma / y.mu))
    rel = math.hypot(x.sigma / x.mu, y.sigma / y.mu)
    return NormalDist(mu, abs(mu) * rel)


def variation_range(d: NormalDist, z: float = Z80) -> tuple:
    return d.mu - z * d.sigma, d.mu + z * d.sigma


def geomean_dist(ratios: Sequence[NormalDist], n: int = None) -> NormalDist:
    """Geometric mean of independent positive ratios."""
    if n is None:
        n = len(ratios)
    if n != len(ratios) or n == 0:
        raise ValueError(f"geomean_dist: n={n} but {len(ratios)} ratios")
    if any(r.mu <= 0 for r in ratios):
        raise ValueError("geomean_dist: ratio means must be positive")
    mu = math.exp(math.fsum(math.log(r.mu) for r in ratios) / n)
    sigma = mu / n * math.sqrt(math.fsum((r.sigma / r.mu) ** 2 for r in ratios))
    return NormalDist(mu, sigma)


class MismatchVerdict(enum.Enum):
    MATCH = "Match"
    MISMATCH = "Mismatch"
    CLEAR_MISMATCH = "ClearMismatch"

    @property
    def is_mismatch(self) -> bool:
        return self is not MismatchVerdict.MATCH


def _side(v: float) -> int:
    return (v > 1) - (v < 1)


def classify(acc: NormalDist, oneipc_ratio: float, z: float = Z80) -> MismatchVerdict:
    """Compare a simplified-model ratio with the accurate model's ratio distribution.

    The models mismatch when their ratios lie on opposite sides of 1; the
    mismatch is clear when the accurate model's variation range excludes 1.
    A ratio of exactly 1 on either side matches.
    """
    a, b = _side(acc.mu), _side(oneipc_ratio)
    if a == 0 or b == 0 or a == b:
        return MismatchVerdict.MATCH
    lo, hi = variation_range(acc, z)
    if lo > 1 or hi < 1:
        return MismatchVerdict.CLEAR_MISMATCH
    return MismatchVerdict.MISMATCH


@dataclass
class RunMetrics:
    """Per-core results of one measured run."""

    workload_id: str
    model: str
    policy: str
    seed: int
    cycles: list = field(default_factory=list)
    instrs: list = field(default_factory=list)
    l2_misses: list = field(default_factory=list)

    def __post_init__(self):
        if not len(self.cycles) == len(self.instrs) == len(self.l2_misses):
            raise ValueError("per-core lists differ in length")
        if len(set(self.cycles)) > 1:
            raise ValueError("cores of one run must share the cycle count")

    @property
    def n_cores(self) -> int:
        return len(self.cycles)

    @property
    def ipcs(self) -> list:
        return [i / c if c else 0.0 for c, i in zip(self.cycles, self.instrs)]

    @property
    def mpki(self) -> float:
        return mpki(sum(self.l2_misses), sum(self.instrs))

    @property
    def ttp(self) -> float:
        return ttp(self.ipcs)

    def wsu(self, single_ipcs: Sequence[float]) -> float:
        return wsu(self.ipcs, single_ipcs)
