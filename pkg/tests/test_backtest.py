import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.special import ndtri

from covar_lab.backtest import (HitSequence, conditional_subset, dq_test, evaluate_pair,
                                hit_sequence, ks_pvalue, ks_statistic, loss_la, loss_lm, lr_cc,
                                lr_ind, lr_uc)
from covar_lab.covar import covar_leq_gaussian
from covar_lab.errors import DomainError, EmptySubset, LengthMismatch
from covar_lab.unidist import Normal


def _hits(x, n, p):
    bits = np.zeros(n, dtype=int)
    bits[:x] = 1
    return HitSequence(bits, p)


class _Uniform:
    def cdf(self, x):
        return np.clip(x, 0.0, 1.0)


def _markov_brute(bits):
    """Markov-alternative LR from explicit per-step likelihood products."""
    b = list(int(v) for v in bits)
    counts = {(i, j): 0 for i in (0, 1) for j in (0, 1)}
    for prev, cur in zip(b[:-1], b[1:]):
        counts[(prev, cur)] += 1
    ll_alt = 0.0
    for i in (0, 1):
        tot = counts[(i, 0)] + counts[(i, 1)]
        for j in (0, 1):
            if counts[(i, j)]:
                ll_alt += counts[(i, j)] * math.log(counts[(i, j)] / tot)
    ones = counts[(0, 1)] + counts[(1, 1)]
    tot = len(b) - 1
    ll_null = 0.0
    for k, q in ((ones, ones / tot), (tot - ones, 1 - ones / tot)):
        if k:
            ll_null += k * math.log(q)
    return -2.0 * (ll_null - ll_alt)


def test_hits_all_above():
    h = hit_sequence([1.0, 2.0], [0.0, 0.0], 0.05)
    assert h.bits.tolist() == [0, 0]


def test_hits_equal_is_not_violation():
    assert hit_sequence([-1.0, -2.0], [-1.0, -2.0], 0.05).bits.tolist() == [0, 0]


def test_hits_hand_case():
    assert hit_sequence([-2.0, 1.0], [-1.0, -1.0], 0.05).bits.tolist() == [1, 0]


def test_hits_length_mismatch():
    with pytest.raises(LengthMismatch):
        hit_sequence([1.0, 2.0], [0.0], 0.05)


def test_hit_sequence_validation():
    with pytest.raises(DomainError):
        HitSequence(np.array([0, 2]), 0.05)
    with pytest.raises(DomainError):
        HitSequence(np.array([], dtype=int), 0.05)


def test_conditional_subset_empty():
    h = HitSequence(np.zeros(10, dtype=int), 0.05)
    with pytest.raises(EmptySubset):
        conditional_subset(h, np.zeros(10), np.zeros(10), 0.05)


def test_conditional_subset_selection():
    bits = np.zeros(10, dtype=int)
    bits[[3, 7]] = 1
    sys_ret = np.arange(10.0)
    cov = np.full(10, 5.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        h2 = conditional_subset(HitSequence(bits, 0.05), sys_ret, cov, 0.01)
    assert h2.n == 2
    assert h2.bits.tolist() == [1, 0]
    assert h2.nominal_p == 0.01


def test_conditional_subset_low_power_warning():
    bits = np.zeros(10, dtype=int)
    bits[0] = 1
    with pytest.warns(UserWarning):
        conditional_subset(HitSequence(bits, 0.05), np.zeros(10), np.zeros(10), 0.05)


def test_conditional_rate_gaussian_oracle():
    rho, a, b = 0.6, 0.05, 0.05
    qa = ndtri(a)
    cv = covar_leq_gaussian(rho, a, b)
    cov = np.array([[1.0, rho], [rho, 1.0]])
    hits = trials = inside = 0
    for seed in range(200):
        z = np.random.default_rng(seed).multivariate_normal([0, 0], cov, 2000)
        h1 = hit_sequence(z[:, 1], np.full(2000, qa), a)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            h2 = conditional_subset(h1, z[:, 0], np.full(2000, cv), b)
        hits += h2.x
        trials += h2.n
        lo, hi = stats.binom.ppf([0.005, 0.995], h2.n, b)
        inside += lo <= h2.x <= hi
    se = math.sqrt(b * (1 - b) / trials)
    assert abs(hits / trials - b) < 3 * se
    assert inside >= 190


def test_lr_uc_exact_match():
    r = lr_uc(_hits(50, 1000, 0.05))
    assert r.statistic == pytest.approx(0.0, abs=1e-10)
    assert r.p_value == pytest.approx(1.0)
    assert r.df == 1


def test_lr_uc_no_hits():
    r = lr_uc(_hits(0, 100, 0.05))
    assert r.statistic == pytest.approx(-200.0 * math.log(0.95), rel=1e-12)
    assert r.statistic == pytest.approx(10.258, abs=1e-3)
    assert r.p_value == pytest.approx(math.erfc(math.sqrt(r.statistic / 2)), rel=1e-10)


def test_lr_uc_sample_size_oracle():
    n, x, p = 3389, 200, 0.05
    pi = x / n
    stat = -2 * ((n - x) * math.log(1 - p) + x * math.log(p)
                 - (n - x) * math.log(1 - pi) - x * math.log(pi))
    r = lr_uc(_hits(x, n, p))
    assert r.statistic == pytest.approx(stat, abs=1e-10)
    assert r.p_value == pytest.approx(math.erfc(math.sqrt(stat / 2)), abs=1e-10)


def test_lr_uc_all_hits():
    r = lr_uc(_hits(20, 20, 0.05))
    assert r.statistic == pytest.approx(-40.0 * math.log(0.05))


def test_lr_ind_equal_rates():
    # 00 01 10 11 transitions balanced so pi01 = pi11 = 1/2
    bits = np.array([0, 0, 1, 1, 0, 0, 1, 1, 0])
    n = _markov_brute(bits)
    assert lr_ind(HitSequence(bits, 0.5)).statistic == pytest.approx(n, abs=1e-12)
    assert lr_ind(HitSequence(bits, 0.5)).statistic == pytest.approx(0.0, abs=1e-12)


def test_lr_ind_alternating():
    bits = np.tile([0, 1], 100)
    r = lr_ind(HitSequence(bits, 0.05))
    # alternative likelihood is 1, null is Bernoulli(100/199)
    expected = -2.0 * (100 * math.log(100 / 199) + 99 * math.log(99 / 199))
    assert r.statistic == pytest.approx(expected, rel=1e-12)
    assert r.p_value < 1e-6


def test_lr_ind_degenerate_flag():
    r = lr_ind(HitSequence(np.array([0, 0, 0, 1]), 0.05))
    assert r.flag == "degenerate_transitions"
    assert r.statistic >= 0


def test_lr_ind_too_short():
    with pytest.raises(DomainError):
        lr_ind(HitSequence(np.array([1]), 0.05))


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=120), st.floats(0.01, 0.5))
def test_lr_ind_matches_brute_force(bits, p):
    h = HitSequence(np.array(bits), p)
    assert lr_ind(h).statistic == pytest.approx(max(_markov_brute(bits), 0.0), abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=2, max_size=200), st.floats(0.01, 0.5))
def test_lr_cc_additive(bits, p):
    h = HitSequence(np.array(bits), p)
    cc, uc, ind = lr_cc(h), lr_uc(h), lr_ind(h)
    assert cc.df == 2
    assert cc.statistic == pytest.approx(uc.statistic + ind.statistic, abs=1e-12)
    for r in (cc, uc, ind):
        assert r.statistic >= 0
        assert 0 <= r.p_value <= 1
        assert r.p_value == pytest.approx(stats.chi2.sf(r.statistic, r.df), abs=1e-12)


def test_dq_size():
    rejections = 0
    for seed in range(500):
        rng = np.random.default_rng(seed)
        bits = (rng.random(500) < 0.05).astype(int)
        f = rng.normal(-1.6, 0.3, 500)
        rejections += dq_test(HitSequence(bits, 0.05), f).p_value < 0.05
    assert 0.02 <= rejections / 500 <= 0.09


def test_dq_clustered_rejects():
    bits = np.zeros(500, dtype=int)
    bits[200:225] = 1
    f = np.random.default_rng(1).normal(-1.6, 0.3, 500)
    r = dq_test(HitSequence(bits, 0.05), f)
    assert r.p_value < 0.01
    assert r.df == 6


def test_dq_singular_design():
    bits = np.zeros(100, dtype=int)
    bits[::10] = 1
    r = dq_test(HitSequence(bits, 0.05), np.full(100, -1.0))
    assert r.flag == "singular_regressors"
    assert r.df == 5


def test_dq_needs_observations():
    with pytest.raises(DomainError):
        dq_test(HitSequence(np.zeros(6, dtype=int), 0.05), np.zeros(6))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_dq_statistic_nonnegative(seed):
    rng = np.random.default_rng(seed)
    bits = (rng.random(60) < 0.1).astype(int)
    r = dq_test(HitSequence(bits, 0.1), rng.normal(size=60))
    assert r.statistic >= 0 and 0 <= r.p_value <= 1


def test_losses_no_violation():
    assert loss_lm([1.0, 2.0], [0.0, 0.0]) == 0.0


def test_losses_hand_case():
    y, f = [-2.0, 1.0], [-1.0, -1.0]
    assert loss_lm(y, f) == pytest.approx(1.0)
    assert loss_la(y, f, 0.5) == pytest.approx(2.0)


def test_la_penalty_only_above_nominal():
    y, f = np.array([-2.0, 1.0, 1.0, 1.0]), np.full(4, -1.0)
    # coverage 0.25 <= 0.3: no penalty
    assert loss_la(y, f, 0.3) == pytest.approx((2.0 + 2 + 2 + 2) / 4)
    # coverage 0.25 > 0.1: penalty exp(1.5)
    assert loss_la(y, f, 0.1) == pytest.approx((math.exp(1.5) * 2.0 + 6.0) / 4)


def test_loss_length_mismatch():
    with pytest.raises(LengthMismatch):
        loss_la([1.0], [1.0, 2.0], 0.05)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=1, max_size=50))
def test_loss_shift_on_clean_data(y):
    y = np.array(y)
    f = y - 0.5
    shifted = f - 1.0
    assert loss_lm(y, shifted) == loss_lm(y, f) == 0.0
    # LA on violation-free data is the mean distance, so it grows by one
    assert loss_la(y, shifted, 0.05) == pytest.approx(loss_la(y, f, 0.05) + 1.0)


def test_ks_series_oracle():
    n = 100
    i = np.arange(1, n + 1)
    x = np.where(i >= 16, i / n - 0.15, 0.0)
    assert ks_statistic(x, _Uniform()) == pytest.approx(0.15, abs=1e-12)
    lam = math.sqrt(n) * 0.15
    series = 2 * sum((-1) ** (k - 1) * math.exp(-2 * k * k * lam * lam) for k in range(1, 101))
    assert ks_pvalue(x, _Uniform()) == pytest.approx(series, abs=1e-6)


def test_ks_min_sample():
    with pytest.raises(DomainError):
        ks_pvalue(np.zeros(10), Normal())


def test_ks_uniform_under_null():
    d = Normal()
    p = [ks_pvalue(np.random.default_rng(s).standard_normal(300), d) for s in range(500)]
    assert stats.kstest(p, "uniform").pvalue > 0.01


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=1, max_size=40))
def test_ks_distance_bounds(x):
    assert 0.0 <= ks_statistic(x, Normal()) <= 1.0


def test_evaluate_pair_layout():
    rng = np.random.default_rng(3)
    yb, ys = rng.standard_normal(400), rng.standard_normal(400)
    rows = evaluate_pair(yb, np.full(400, -1.645), ys, np.full(400, -2.0), 0.05, 0.05)
    keys = [(r["stage"], r["test"]) for r in rows]
    assert keys[:6] == [("var", t) for t in ("uc", "ind", "cc", "dq", "LM", "LA")]
    assert ("covar", "uc") in keys and ("covar", "LA") in keys


def test_evaluate_pair_empty_stage_two():
    rows = evaluate_pair(np.ones(50), np.zeros(50), np.ones(50), np.zeros(50), 0.05, 0.05)
    assert rows[-1]["test"] == "empty"
