import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from pssmp.stats import ks_one_sided, ks_two_sample, mean_and_se, wilson_ci


def test_identical_samples_give_zero_statistic():
    a = np.arange(100.0)
    r = ks_two_sample(a, a.copy())
    assert r.statistic == 0.0 and r.p_value == 1.0


def test_disjoint_supports_give_statistic_one():
    r = ks_two_sample(np.arange(50.0), np.arange(50.0) + 100)
    assert r.statistic == 1.0
    assert r.p_value < 1e-10


def test_undersized_sample_rejected():
    with pytest.raises(ValueError):
        ks_two_sample(np.arange(10.0), np.arange(100.0))


@pytest.mark.parametrize("seed", range(5))
def test_statistic_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=300)
    b = rng.normal(0.1, 1.1, size=450)
    ref = sps.ks_2samp(a, b)
    r = ks_two_sample(a, b)
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-15)
    en = math.sqrt(a.size * b.size / (a.size + b.size))
    lam = (en + 0.12 + 0.11 / en) * r.statistic
    assert r.p_value == pytest.approx(sps.kstwobign.sf(lam),
                                      rel=1e-6, abs=1e-12)


def test_statistic_with_ties_matches_scipy():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 5, 200).astype(float)
    b = rng.integers(0, 6, 300).astype(float)
    assert ks_two_sample(a, b).statistic == pytest.approx(sps.ks_2samp(a, b).statistic)


def test_calibration_on_normal_samples():
    passes = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        passes += ks_two_sample(rng.normal(size=10_000), rng.normal(size=10_000)).passed()
    assert passes >= 95


def test_one_sided_detects_dominance_direction():
    rng = np.random.default_rng(0)
    small = rng.exponential(size=2000)
    large = small + 0.5
    # small <=_st large holds: no evidence against it
    assert ks_one_sided(small, large).p_value > 0.5
    assert ks_one_sided(large, small).p_value < 1e-6


def test_wilson_examples():
    lo, hi = wilson_ci(50, 100)
    assert lo == pytest.approx(0.404, abs=1e-3) and hi == pytest.approx(0.596, abs=1e-3)
    assert (lo + hi) / 2 == pytest.approx(0.5, abs=1e-3)
    assert wilson_ci(0, 20)[0] == 0.0
    assert wilson_ci(20, 20)[1] == 1.0


def test_wilson_domain_errors():
    for k, n in [(-1, 10), (11, 10), (0, 0)]:
        with pytest.raises(ValueError):
            wilson_ci(k, n)


@given(st.integers(1, 5000).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_wilson_contains_point_estimate(kn):
    k, n = kn
    lo, hi = wilson_ci(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


@given(st.integers(1, 2000).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_wilson_matches_closed_form(kn):
    k, n = kn
    z = sps.norm.ppf(0.975)
    p = k / n
    c = (p + z * z / (2 * n)) / (1 + z * z / n)
    h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
    lo, hi = wilson_ci(k, n)
    if 0 < k < n:
        assert lo == pytest.approx(c - h, abs=1e-12)
        assert hi == pytest.approx(c + h, abs=1e-12)


@settings(max_examples=50)
@given(st.lists(st.floats(-1e6, 1e6), min_size=30, max_size=80),
       st.lists(st.floats(-1e6, 1e6), min_size=30, max_size=80))
def test_ks_symmetric_and_bounded(a, b):
    r1, r2 = ks_two_sample(a, b), ks_two_sample(b, a)
    assert r1.statistic == r2.statistic
    assert 0.0 <= r1.statistic <= 1.0 and 0.0 <= r1.p_value <= 1.0


def test_mean_and_se():
    m, se = mean_and_se([1.0, 2.0, 3.0, 4.0])
    assert m == 2.5 and se == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2)
