import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from covar_lab.copulas import CopulaFit, copula_cdf
from covar_lab.covar import (RiskQuery, RiskSeries, covar_eq_gaussian, covar_leq_copula,
                             covar_leq_gaussian, covar_leq_mixture, delta_covar,
                             to_return_space)
from covar_lab.errors import DomainError
from covar_lab.garch import GarchFit, GjrParams, var_forecast
from covar_lab.mixing import GIG, Degenerate
from covar_lab.mvmodels import BivariateLaw, rectangle_prob
from covar_lab.unidist import Normal, SkewT


def gauss_law(rho):
    return BivariateLaw(Degenerate(), np.zeros(2), np.zeros(2),
                        np.array([[1.0, rho], [rho, 1.0]]))


def _fit(c=0.0, a=0.0):
    p = GjrParams(c=c, a=a, alpha0=1e-6, alpha1=0.05, gamma=0.0, beta1=0.9)
    return GarchFit(p, np.ones(3), np.zeros(3), 0.0, False, {})


def _mc_covar(rho, alpha, beta, n=10_000_000, batches=20, seed=11):
    """Empirical beta-quantile of the system on draws with the bank at or below its alpha-quantile."""
    rng = np.random.default_rng(seed)
    z1 = rng.standard_normal(n)
    z2 = rho * z1 + math.sqrt(1 - rho * rho) * rng.standard_normal(n)
    sel = z1[z2 <= ndtri(alpha)]
    est = np.quantile(sel, beta)
    parts = [np.quantile(b, beta) for b in np.array_split(sel, batches)]
    return est, np.std(parts, ddof=1) / math.sqrt(batches)


def test_eq_gaussian_example():
    assert covar_eq_gaussian(0.5, 0.05, 0.05) == pytest.approx(-2.2469, abs=1e-4)
    assert covar_eq_gaussian(0.5, 0.05, 0.05) == pytest.approx(
        (0.5 + math.sqrt(0.75)) * -1.6448536269514722, rel=1e-12)


def test_eq_gaussian_limits():
    assert covar_eq_gaussian(0.0, 0.1, 0.03) == pytest.approx(ndtri(0.03))
    assert covar_eq_gaussian(1.0, 0.05, 0.05) == pytest.approx(ndtri(0.05))
    with pytest.raises(DomainError):
        covar_eq_gaussian(1.5, 0.05, 0.05)


def test_leq_independence():
    for a in (0.01, 0.05, 0.5):
        assert covar_leq_mixture(gauss_law(0.0), a, 0.05) == pytest.approx(ndtri(0.05), abs=1e-12)


def test_leq_comonotone_limit():
    c = covar_leq_mixture(gauss_law(0.999999), 0.05, 0.05)
    assert c == pytest.approx(ndtri(0.0025), abs=5e-3)
    assert covar_leq_gaussian(0.99999999, 0.05, 0.05) == pytest.approx(ndtri(0.0025), abs=1e-3)


def test_copula_limits():
    m = SkewT(6.0, 0.9)
    assert covar_leq_copula(CopulaFit("Independence", {}), m, 0.05, 0.05) == \
        pytest.approx(float(m.quantile(0.05)), rel=1e-12)
    assert covar_leq_copula(CopulaFit("Comonotone", {}), m, 0.05, 0.05) == \
        pytest.approx(float(m.quantile(0.0025)), rel=1e-12)


def test_gaussian_routes_agree():
    law = gauss_law(0.5)
    mix = covar_leq_mixture(law, 0.05, 0.05)
    cop = covar_leq_copula(CopulaFit("Normal", {"rho": 0.5}), Normal(), 0.05, 0.05)
    closed = covar_leq_gaussian(0.5, 0.05, 0.05)
    assert mix == pytest.approx(closed, abs=1e-5)
    assert cop == pytest.approx(closed, abs=1e-5)
    assert cop == pytest.approx(mix, abs=1e-4)


def test_gaussian_mc_oracle():
    est, se = _mc_covar(0.5, 0.05, 0.05)
    c = covar_leq_mixture(gauss_law(0.5), 0.05, 0.05)
    assert abs(c - est) < 3 * se


def test_delta_covar_mc_oracle():
    law = gauss_law(0.5)
    stress, median = covar_leq_mixture(law, 0.05, 0.05), covar_leq_mixture(law, 0.5, 0.05)
    for c, a in ((stress, 0.05), (median, 0.5)):
        est, se = _mc_covar(0.5, a, 0.05, n=4_000_000, seed=int(a * 100))
        assert abs(c - est) < 3 * se
    assert delta_covar(stress, median) == pytest.approx(stress - median)
    assert delta_covar(stress, median) < 0


def test_delta_covar_zero_cases():
    assert delta_covar(-1.3, -1.3) == 0.0
    law = gauss_law(0.0)
    assert delta_covar(covar_leq_mixture(law, 0.01, 0.05), covar_leq_mixture(law, 0.5, 0.05)) == 0.0


@pytest.mark.parametrize("rho", [0.1, 0.3, 0.5, 0.7, 0.9])
def test_stress_below_median(rho):
    law = gauss_law(rho)
    assert covar_leq_mixture(law, 0.05, 0.05) <= covar_leq_mixture(law, 0.5, 0.05)


def test_root_residual_mixture():
    law = BivariateLaw(GIG(-0.5, 1.0, 1.0).scaled(1.0), np.zeros(2), np.array([-0.1, -0.2]),
                       np.array([[0.8, 0.4], [0.4, 0.9]]), n_points=4096, halfwidth=30.0)
    c = covar_leq_mixture(law, 0.05, 0.05)
    q = law.margin_y.quantile(0.05)
    assert abs(rectangle_prob(law, c, q) - 0.0025) < 1e-8


@pytest.mark.parametrize("family, params", [
    ("Normal", {"rho": 0.4}), ("StudentT", {"rho": 0.6, "nu": 5.0}),
    ("BB1", {"theta": 0.5, "delta": 1.4}), ("BB7", {"theta": 1.5, "delta": 0.8})])
def test_root_residual_copula(family, params):
    m = SkewT(5.0, 0.95)
    fit = CopulaFit(family, params)
    c = covar_leq_copula(fit, m, 0.05, 0.05)
    assert abs(copula_cdf(fit, float(m.cdf(c)), 0.05) - 0.0025) < 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.9, 0.95), st.floats(0.01, 0.5), st.floats(0.01, 0.3), st.floats(0.01, 0.3))
def test_monotone_in_beta(rho, alpha, b1, b2):
    lo, hi = sorted((b1, b2))
    assert covar_leq_gaussian(rho, alpha, lo) <= covar_leq_gaussian(rho, alpha, hi) + 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.9, 0.9), st.floats(0.01, 0.5), st.floats(0.01, 0.3))
def test_mixture_route_matches_closed_form(rho, alpha, beta):
    assert covar_leq_mixture(gauss_law(rho), alpha, beta) == pytest.approx(
        covar_leq_gaussian(rho, alpha, beta), abs=1e-5)


def test_return_space():
    assert to_return_space(-1.7, _fit(), 1.0, 0.3) == pytest.approx(-1.7)
    f = _fit(c=0.001, a=0.1)
    mean = 0.001 + 0.1 * 0.02
    d1 = to_return_space(-2.0, f, 0.01, 0.02) - mean
    d2 = to_return_space(-2.0, f, 0.02, 0.02) - mean
    assert d2 == pytest.approx(2 * d1)
    q = ndtri(0.05)
    assert to_return_space(q, f, 0.013, -0.01) == pytest.approx(var_forecast(f, 0.013, -0.01, q))


def test_level_checks():
    with pytest.raises(DomainError):
        covar_leq_gaussian(0.5, 0.0, 0.05)
    with pytest.raises(DomainError):
        RiskQuery(0.05, 1.0, gauss_law(0.5))


def test_risk_query_routes():
    law = gauss_law(0.5)
    q = RiskQuery(0.05, 0.05, law)
    assert q.solve() == pytest.approx(covar_leq_mixture(law, 0.05, 0.05))
    assert q.median().alpha == 0.5
    cq = RiskQuery(0.05, 0.05, (CopulaFit("Normal", {"rho": 0.5}), Normal()))
    assert cq.solve() == pytest.approx(q.solve(), abs=1e-4)


def test_risk_series_delta():
    s = RiskSeries(("d1", "d2"), np.array([-1.0, -2.0]), np.array([-3.0, -4.0]),
                   np.array([-2.0, -2.5]))
    np.testing.assert_allclose(s.delta_covar, [-1.0, -1.5])
