import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import binom_tail_exact, gamma_cdf_quad, gamma_sf_mp, min_count_exact
from waterseeker.stats import (
    ThresholdTable,
    WindowTest,
    _gamma_contfrac,
    _gamma_series,
    aar_p_value,
    aar_sum,
    aar_sum_threshold,
    aar_threshold,
    binomial_tail,
    build_threshold_table,
    clt_z_threshold,
    kgw_min_count,
    kgw_threshold,
    kgw_z,
    log_binomial_sf,
    log_binomial_tail,
    log_gamma_cdf_sf,
    regularized_gamma_cdf,
    window_statistic,
)
from waterseeker.streams import Scheme, SchemeParams, ScoreStream, SegmentSpan, sample_null_stream

ALPHA = 1e-6


# -- z-score and AAR sum ------------------------------------------------------

def test_kgw_z_examples():
    assert kgw_z(50, 100, 0.5) == 0.0
    assert kgw_z(75, 100, 0.5) == pytest.approx(5.0)
    assert kgw_z(42, 50, 0.5) == pytest.approx(17 / math.sqrt(12.5))
    with pytest.raises(ValueError):
        kgw_z(0, 0, 0.5)


def test_aar_sum_examples():
    assert aar_sum(np.zeros(7)) == 0.0
    assert aar_sum([1 - math.exp(-1)]) == pytest.approx(1.0, abs=1e-15)
    assert aar_sum(np.full(100, 0.5)) == pytest.approx(100 * math.log(2), rel=1e-14)


def test_aar_sum_clamps_saturated_values():
    s = aar_sum([1.0])
    assert math.isfinite(s) and s == pytest.approx(53 * math.log(2))
    with pytest.raises(ValueError):
        aar_sum([])


# -- incomplete gamma ---------------------------------------------------------

def test_gamma_cdf_examples():
    assert regularized_gamma_cdf(1, 1) == pytest.approx(1 - math.exp(-1), abs=1e-14)
    assert regularized_gamma_cdf(3.5, 0) == 0.0
    assert regularized_gamma_cdf(50, 50) == pytest.approx(gamma_cdf_quad(50, 50), abs=1e-12)
    # the oracle gives 0.5188083; the commonly quoted 0.518828 agrees only to 1e-4
    assert regularized_gamma_cdf(50, 50) == pytest.approx(0.518828, abs=1e-4)


def test_gamma_cdf_matches_quadrature_grid():
    rng = np.random.default_rng(0)
    s = np.exp(rng.uniform(0, math.log(1000), 50))
    x = s * rng.uniform(0.5, 1.5, 50) + rng.uniform(0, 3, 50)
    ours = regularized_gamma_cdf(s, x)
    for si, xi, oi in zip(s, x, ours):
        assert abs(oi - gamma_cdf_quad(si, xi)) < 1e-10


def test_gamma_sf_deep_tail_matches_mpmath():
    for s, x in [(10, 80), (100, 200), (400, 520), (1, 40)]:
        lq = float(log_gamma_cdf_sf(s, x)[1])
        assert lq == pytest.approx(math.log(gamma_sf_mp(s, x)), rel=1e-10)


def test_gamma_series_and_contfrac_are_complementary():
    # both expansions at points where each converges (x a little above s + 1)
    for s, x in [(5, 6.5), (20, 22), (100, 103), (300, 302), (2, 3.2), (1, 2.5)]:
        lp = _gamma_series(np.array([float(s)]), np.array([float(x)]))[0]
        lq = _gamma_contfrac(np.array([float(s)]), np.array([float(x)]))[0]
        assert math.exp(lp) + math.exp(lq) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(0.5, 1000), x1=st.floats(0, 2000), x2=st.floats(0, 2000))
def test_gamma_cdf_monotone_in_x(s, x1, x2):
    lo, hi = sorted((x1, x2))
    assert regularized_gamma_cdf(s, lo) <= regularized_gamma_cdf(s, hi) + 1e-15


def test_gamma_errors():
    with pytest.raises(ValueError):
        regularized_gamma_cdf(0, 1)
    with pytest.raises(ValueError):
        regularized_gamma_cdf(1, math.nan)
    with pytest.raises(ValueError):
        regularized_gamma_cdf(1, math.inf)


def test_aar_p_value_examples():
    assert aar_p_value(0.0, 17) == 1.0
    assert aar_p_value(1.0, 1) == pytest.approx(math.exp(-1), abs=1e-14)


def test_aar_p_values_uniform_under_null():
    from scipy.stats import kstest
    rng = np.random.default_rng(1)
    w = 40
    u = rng.random((100_000, w))
    p = aar_p_value(-np.log1p(-u).sum(axis=1), np.full(100_000, w))
    assert kstest(p, "uniform").pvalue > 0.01


def test_aar_threshold_is_alpha():
    assert aar_threshold(1e-6) == 1e-6
    assert aar_threshold(0.05) == 0.05
    with pytest.raises(ValueError):
        aar_threshold(1.0)


def test_aar_rejection_rate_at_threshold():
    rng = np.random.default_rng(2)
    w, n, rejected = 100, 1_000_000, 0
    for _ in range(10):
        sums = rng.standard_gamma(1.0, size=(n // 10, w)).sum(axis=1)
        rejected += int((aar_p_value(sums, np.full(sums.size, w)) < aar_threshold(1e-3)).sum())
    assert abs(rejected / n - 1e-3) < 3e-4


def test_aar_sum_threshold_brackets_alpha():
    for w in (1, 10, 100, 400, 3000):
        s = aar_sum_threshold(w, ALPHA)
        assert aar_p_value(s, w) <= ALPHA * (1 + 1e-9)
        assert aar_p_value(s * (1 - 1e-6), w) > ALPHA


# -- binomial tails -----------------------------------------------------------

def test_binomial_tail_examples():
    assert binomial_tail(50, 0.5, 0) == 1.0
    assert binomial_tail(50, 0.5, 42) == pytest.approx(float(binom_tail_exact(50, 42)), rel=1e-13)
    assert binomial_tail(50, 0.5, 42) == pytest.approx(5.82e-7, rel=1e-2)
    assert binomial_tail(50, 0.5, 41) == pytest.approx(2.8e-6, rel=3e-2)


def test_binomial_tail_matches_enumeration_up_to_60():
    for w in range(1, 61):
        for k in range(w + 1):
            exact = binom_tail_exact(w, k)
            assert binomial_tail(w, 0.5, k) == pytest.approx(float(exact), rel=1e-12)


def test_binomial_tail_non_half_gamma():
    g = Fraction(1, 4)
    for w, k in [(30, 20), (60, 45), (17, 3)]:
        assert binomial_tail(w, 0.25, k) == pytest.approx(float(binom_tail_exact(w, k, g)), rel=1e-12)


def test_log_binomial_sf_agrees_with_direct_sum():
    rng = np.random.default_rng(3)
    w = rng.integers(1, 3000, 400)
    k = (rng.random(400) * (w + 1)).astype(int)
    fast = log_binomial_sf(k, w, 0.5)
    for wi, ki, fi in zip(w, k, fast):
        # log-space absolute error, i.e. relative error of the probability
        assert fi == pytest.approx(log_binomial_tail(int(wi), 0.5, int(ki)), rel=1e-9, abs=1e-10)


def test_log_binomial_sf_exact_small():
    for w in range(1, 61, 7):
        for k in range(1, w + 1):
            exact = math.log(binom_tail_exact(w, k))
            assert float(log_binomial_sf(k, w, 0.5)) == pytest.approx(exact, rel=1e-10, abs=1e-13)


# -- thresholds ---------------------------------------------------------------

def test_kgw_threshold_examples():
    assert kgw_threshold(10_000, 0.5, ALPHA, 200) == pytest.approx(4.7534, abs=1e-3)
    assert kgw_threshold(50, 0.5, ALPHA, 200) == pytest.approx(kgw_z(42, 50, 0.5))
    assert kgw_threshold(5, 0.5, ALPHA, 200) == math.inf
    assert kgw_min_count(5, 0.5, ALPHA) is None


def test_clt_threshold_value():
    assert clt_z_threshold(ALPHA) == pytest.approx(4.753424, abs=1e-5)


def test_min_count_exact_up_to_60():
    for w in range(1, 61):
        assert kgw_min_count(w, 0.5, ALPHA) == min_count_exact(w, Fraction(1, 10 ** 6))


def test_min_count_minimal_up_to_400():
    for w in range(61, 401):
        k = kgw_min_count(w, 0.5, ALPHA)
        assert log_binomial_tail(w, 0.5, k) < math.log(ALPHA) <= log_binomial_tail(w, 0.5, k - 1)


def test_threshold_table_minimality_kgw():
    params = SchemeParams(Scheme.KGW, alpha=ALPHA, clt_cutoff=None)
    table = build_threshold_table(params, 400)
    for w, z in table.entries.items():
        if math.isinf(z):
            assert binomial_tail(w, 0.5, w) >= ALPHA
            continue
        k = round(0.5 * w + z * math.sqrt(0.25 * w))
        assert binomial_tail(w, 0.5, k) < ALPHA <= binomial_tail(w, 0.5, k - 1)


def test_threshold_table_json_round_trip_and_stable_bytes():
    for scheme in Scheme:
        t = build_threshold_table(SchemeParams(scheme), 120)
        text = t.to_json()
        assert build_threshold_table(SchemeParams(scheme), 120).to_json() == text
        back = ThresholdTable.from_json(text)
        assert back == t
    with pytest.raises(ValueError):
        ThresholdTable.from_json('{"version": 99}')


# -- window statistics --------------------------------------------------------

def test_window_statistic_examples():
    ones = ScoreStream(Scheme.KGW, np.ones(100, dtype=np.int8))
    st_ = window_statistic(ones, SegmentSpan(0, 100))
    assert st_.raw == pytest.approx(10.0) and st_.tail_prob == pytest.approx(2.0 ** -100, rel=1e-12)
    half = ScoreStream(Scheme.KGW, np.tile([0, 1], 50).astype(np.int8))
    st_ = window_statistic(half, SegmentSpan(0, 100))
    assert st_.raw == 0.0 and st_.tail_prob > 0.4
    aar = ScoreStream(Scheme.AAR, np.full(50, 1 - math.exp(-1)))
    st_ = window_statistic(aar, SegmentSpan(0, 50))
    assert st_.raw == pytest.approx(50.0, rel=1e-12)
    assert st_.tail_prob == pytest.approx(1 - gamma_cdf_quad(50, 50), abs=1e-10)
    assert st_.tail_prob == pytest.approx(0.4812, abs=1e-4)


@settings(max_examples=60, deadline=None)
@given(w=st.integers(1, 300), k1=st.integers(0, 300), k2=st.integers(0, 300))
def test_kgw_tail_non_increasing_in_count(w, k1, k2):
    k1, k2 = sorted((k1 % (w + 1), k2 % (w + 1)))
    assert log_binomial_tail(w, 0.5, k1) >= log_binomial_tail(w, 0.5, k2)


# -- WindowTest ---------------------------------------------------------------

@pytest.mark.parametrize("scheme", list(Scheme))
def test_window_test_passes_matches_definition(scheme):
    params = SchemeParams(scheme, alpha=1e-4)
    test = WindowTest(params)
    rng = np.random.default_rng(4)
    lengths = rng.integers(1, 1500, 3000)
    if scheme is Scheme.KGW:
        raws = rng.binomial(lengths, 0.62).astype(float)
    else:
        raws = rng.gamma(lengths * 1.35)
    got = test.passes(lengths, raws)
    for w, r, g in zip(lengths, raws, got):
        w = int(w)
        if scheme is Scheme.AAR:
            expected = aar_p_value(r, w) < 1e-4
        elif w >= 200:
            expected = kgw_z(r, w, 0.5) >= clt_z_threshold(1e-4)
        else:
            k = kgw_min_count(w, 0.5, 1e-4)
            expected = k is not None and r >= k
        assert g == expected
    assert np.all(test.may_pass(lengths, raws)[got])


def test_window_test_log_tail_cached_and_uncached_agree():
    test = WindowTest(SchemeParams(Scheme.KGW))
    lengths = np.array([1000, 1024, 1025, 2000])
    raws = np.array([560, 600, 560, 1100], dtype=float)
    for w, r, lt in zip(lengths, raws, test.log_tail(lengths, raws)):
        assert lt == pytest.approx(log_binomial_tail(int(w), 0.5, int(r)), rel=1e-9)


def test_null_stream_window_pvalues_calibrated():
    # per-window rejection rate at a loose alpha is at most alpha
    s = sample_null_stream(SchemeParams(Scheme.KGW), 400_000, seed=5)
    cs = np.concatenate(([0], np.cumsum(s.values, dtype=np.int64)))
    w = 60
    test = WindowTest(SchemeParams(Scheme.KGW, alpha=1e-3))
    sums = (cs[w::w] - cs[:-w:w]).astype(float)
    rate = test.passes(np.full(sums.size, w), sums).mean()
    assert rate <= 1e-3 + 3 * math.sqrt(1e-3 / sums.size)
