import math
import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from simfidelity.metrics import (ApproximationWarning, MismatchVerdict, NormalDist, RunMetrics,
                                 classify, geomean_dist, mpki, normalized_distance, ratio_dist,
                                 ttp, variation_range, wsu)

MC_DRAWS = 10**6
vectors = st.lists(st.floats(0.01, 100), min_size=1, max_size=8)


# --- run metrics ----------------------------------------------------------------------------

def test_mpki_examples():
    assert mpki(1000, 10**6) == 1.0
    assert mpki(0, 12345) == 0.0
    with pytest.raises(ValueError):
        mpki(5, 0)


def test_ttp_examples():
    assert ttp([1, 1, 1, 1]) == 4.0
    assert ttp([]) == 0.0
    assert ttp([0.25, 0.5]) == 0.75


def test_wsu_examples():
    assert wsu([0.3, 0.7, 0.2, 0.9], [0.3, 0.7, 0.2, 0.9]) == 4.0
    assert wsu([0.5, 0.5], [1, 1]) == 1.0
    with pytest.raises(ValueError):
        wsu([0.5], [0.0])
    with pytest.raises(ValueError):
        wsu([0.5, 0.5], [1.0])


def test_toy_run_matches_exact_arithmetic():
    run = RunMetrics("mix1", "acc", "lru", 1, cycles=[4000] * 3,
                     instrs=[3000, 1500, 500], l2_misses=[12, 30, 7])
    singles = [Fraction(9, 10), Fraction(1, 2), Fraction(1, 4)]
    ipcs = [Fraction(3000, 4000), Fraction(1500, 4000), Fraction(500, 4000)]
    assert run.mpki == pytest.approx(float(Fraction(1000 * 49, 5000)))
    assert run.ttp == pytest.approx(float(sum(ipcs)))
    assert run.wsu([float(s) for s in singles]) == pytest.approx(
        float(sum(i / s for i, s in zip(ipcs, singles))))


def test_run_metrics_shared_clock():
    with pytest.raises(ValueError):
        RunMetrics("w", "acc", "lru", 0, cycles=[10, 11], instrs=[5, 5], l2_misses=[0, 0])


# --- normalized distance ----------------------------------------------------------------------

def test_distance_examples():
    v = [1.0, 2.0, 3.0]
    assert normalized_distance(v, v) == pytest.approx(0, abs=1e-12)
    assert normalized_distance(v, [2 * x for x in v]) == pytest.approx(0, abs=1e-12)
    assert normalized_distance([1, 0], [0, 1]) == pytest.approx(math.sqrt(2))
    with pytest.raises(ValueError):
        normalized_distance([0, 0], [1, 1])


@given(vectors, st.floats(0.1, 10), st.floats(0.1, 10), st.data())
def test_distance_scale_invariant_and_bounded(x, a, b, data):
    y = data.draw(st.lists(st.floats(0.01, 100), min_size=len(x), max_size=len(x)))
    d = normalized_distance(x, y)
    assert 0 <= d <= 2
    assert normalized_distance([a * v for v in x], [b * v for v in y]) == pytest.approx(d, abs=1e-9)


# --- ratio and geometric-mean distributions --------------------------------------------------

def test_ratio_examples():
    assert ratio_dist(NormalDist(2, 0), NormalDist(4, 0)) == NormalDist(0.5, 0)
    r = ratio_dist(NormalDist(1, 0.01), NormalDist(1, 0.01))
    assert r.mu == 1 and r.sigma == pytest.approx(math.sqrt(2) * 0.01)
    with pytest.raises(ZeroDivisionError):
        ratio_dist(NormalDist(1, 0), NormalDist(0, 0))


def test_ratio_matches_monte_carlo():
    rng = np.random.default_rng(1)
    x = rng.normal(1, 0.02, MC_DRAWS)
    y = rng.normal(1, 0.03, MC_DRAWS)
    r = ratio_dist(NormalDist(1, 0.02), NormalDist(1, 0.03))
    assert r.sigma == pytest.approx(np.std(x / y), rel=0.02)


def test_ratio_warns_on_large_cv():
    with pytest.warns(ApproximationWarning):
        ratio_dist(NormalDist(1, 0.5), NormalDist(1, 0.01))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ratio_dist(NormalDist(1, 0.05), NormalDist(1, 0.05))


def test_variation_range_examples():
    lo, hi = variation_range(NormalDist(1, 0.1))
    assert (lo, hi) == (pytest.approx(0.872), pytest.approx(1.128))
    assert variation_range(NormalDist(3.5, 0)) == (3.5, 3.5)


def test_variation_range_covers_eighty_percent():
    z = np.random.default_rng(2).standard_normal(MC_DRAWS)
    lo, hi = variation_range(NormalDist(0, 1))
    assert 0.78 <= np.mean((z >= lo) & (z <= hi)) <= 0.82
    assert NormalDist(0, 1).coverage() == pytest.approx(0.7995, abs=1e-3)


def test_geomean_examples():
    g = geomean_dist([NormalDist(1, 0.02)] * 9)
    assert g.mu == pytest.approx(1) and g.sigma == pytest.approx(0.02 / 3)
    assert geomean_dist([NormalDist(2, 0), NormalDist(0.5, 0)]) == NormalDist(pytest.approx(1), 0)
    with pytest.raises(ValueError):
        geomean_dist([NormalDist(1, 0), NormalDist(-1, 0)])
    with pytest.raises(ValueError):
        geomean_dist([NormalDist(1, 0)], n=2)


def test_geomean_matches_monte_carlo():
    rng = np.random.default_rng(3)
    mus = rng.uniform(0.8, 1.3, 15)
    sigmas = mus * rng.uniform(0.005, 0.05, 15)
    draws = rng.normal(mus, sigmas, size=(MC_DRAWS, 15))
    g = np.exp(np.log(draws).mean(axis=1))
    d = geomean_dist([NormalDist(m, s) for m, s in zip(mus, sigmas)])
    assert d.mu == pytest.approx(np.mean(g), rel=1e-3)
    assert d.sigma == pytest.approx(np.std(g), rel=0.02)


@given(st.floats(0.1, 10), st.floats(0, 1))
def test_geomean_of_one_ratio_is_identity(mu, cv):
    d = NormalDist(mu, mu * cv)
    g = geomean_dist([d])
    assert g.mu == pytest.approx(d.mu) and g.sigma == pytest.approx(d.sigma)


def test_normal_from_samples():
    d = NormalDist.from_samples([1.0, 2.0, 3.0])
    assert d == NormalDist(2.0, 1.0)
    assert NormalDist.from_samples([4.0]) == NormalDist(4.0, 0.0)
    with pytest.raises(ValueError):
        NormalDist(1, -0.1)


# --- classification ---------------------------------------------------------------------------

@pytest.mark.parametrize("acc,ratio,verdict", [
    (NormalDist(1.05, 0.01), 1.03, MismatchVerdict.MATCH),
    (NormalDist(1.02, 0.05), 0.98, MismatchVerdict.MISMATCH),
    (NormalDist(1.10, 0.01), 0.95, MismatchVerdict.CLEAR_MISMATCH),
    (NormalDist(0.90, 0.01), 1.00, MismatchVerdict.MATCH),
    (NormalDist(1.00, 0.01), 0.90, MismatchVerdict.MATCH),
])
def test_classify_examples(acc, ratio, verdict):
    assert classify(acc, ratio) is verdict


@given(st.floats(0.5, 1.5), st.floats(0, 0.3), st.floats(0.5, 1.5))
def test_clear_mismatch_implies_mismatch(mu, sigma, ratio):
    v = classify(NormalDist(mu, sigma), ratio)
    if v is MismatchVerdict.CLEAR_MISMATCH:
        assert (mu - 1) * (ratio - 1) < 0
        lo, hi = variation_range(NormalDist(mu, sigma))
        assert lo > 1 or hi < 1
    assert v.is_mismatch == ((mu - 1) * (ratio - 1) < 0)


@settings(max_examples=30)
@given(st.floats(0.5, 2), st.floats(0, 0.05), st.floats(0.5, 2), st.floats(0, 0.05))
def test_pure(mx, cx, my, cy):
    x, y = NormalDist(mx, mx * cx), NormalDist(my, my * cy)
    assert ratio_dist(x, y) == ratio_dist(x, y)
    assert geomean_dist([x, y]) == geomean_dist([x, y])
