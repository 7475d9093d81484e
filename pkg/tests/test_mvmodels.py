import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from covar_lab.bvn import bvn_cdf
from covar_lab.errors import DomainError, IndexOutOfRange, SingularDispersion
from covar_lab.mixing import GIG, Degenerate, TemperedStable, gh_logpdf
from covar_lab.mvmodels import (BivariateLaw, EMConfig, MixtureFit, bivariate_margin, fit_em,
                                fit_mnormal, pair_density, rectangle_prob)

SIGMA3 = np.array([[1.0, 0.5, 0.3], [0.5, 1.0, 0.4], [0.3, 0.4, 1.0]])
SIGMA2 = np.array([[1.0, 0.5], [0.5, 1.0]])


def _gig():
    g = GIG(-0.5, 1.0, 1.0)
    return g.scaled(1.0 / g.mean())


def _mgh3():
    return MixtureFit("MGH", np.array([0.1, 0.0, -0.1]), np.array([-0.1, -0.2, 0.0]), SIGMA3,
                      _gig())


def _law(mixing, gamma=(0.0, 0.0), rho=0.5, mu=(0.0, 0.0)):
    s = np.array([[1.0, rho], [rho, 1.0]])
    return BivariateLaw(mixing, np.array(mu, float), np.array(gamma, float), s,
                        n_points=4096, halfwidth=30.0)


def _gl(lo, hi, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


@pytest.fixture(scope="module")
def mgh_data():
    return _mgh3().sample(np.random.default_rng(10), 5000)


@pytest.fixture(scope="module")
def mgh_fit(mgh_data):
    return fit_em(mgh_data, "MGH")


@pytest.fixture(scope="module")
def mnts_fit():
    truth = MixtureFit("MNTS", np.array([0.2, 0.2, 0.0]), np.array([-0.2, -0.2, 0.0]), SIGMA3,
                       TemperedStable(1.2, 1.0))
    x = truth.sample(np.random.default_rng(11), 1500)
    return truth, x, fit_em(x, "MNTS", EMConfig(nts_grid=240))


def _monotone(trace):
    tr = np.array(trace)
    return np.all(np.diff(tr) >= -1e-8 * np.maximum(1.0, np.abs(tr[:-1])))


def test_em_monotone_mgh(mgh_fit):
    assert len(mgh_fit.loglik_trace) >= 2
    assert _monotone(mgh_fit.loglik_trace)
    assert mgh_fit.loglik == pytest.approx(mgh_fit.loglik_trace[-1])


def test_em_monotone_mnts(mnts_fit):
    _, _, fit = mnts_fit
    assert _monotone(fit.loglik_trace)


def test_mgh_beats_truth(mgh_data, mgh_fit):
    assert mgh_fit.loglik >= _mgh3().logpdf(mgh_data).sum()
    assert mgh_fit.loglik == pytest.approx(mgh_fit.logpdf(mgh_data).sum(), rel=1e-10)
    assert mgh_fit.mixing.mean() == pytest.approx(1.0, abs=1e-8)


def test_mnts_beats_truth(mnts_fit):
    truth, x, fit = mnts_fit
    assert fit.loglik >= truth.logpdf(x).sum()
    assert 0.5 <= fit.mixing.alpha <= 1.95


@pytest.mark.parametrize("seed", [0, 3, 5])
def test_normal_data_no_skew(seed):
    # the mixing law collapses toward a point mass on Gaussian data, which
    # leaves gamma weakly identified; what must hold is that the skew is not
    # significant and the fitted law is centred and standardized
    x = np.random.default_rng(seed).multivariate_normal(np.zeros(3), SIGMA3, 4000)
    fit = fit_em(x, "MGH")
    flat = MixtureFit("MGH", fit.mu + fit.gamma_vec * fit.mixing.mean(), np.zeros(3),
                      fit.dispersion, fit.mixing)
    lr = 2.0 * (fit.loglik - flat.logpdf(x).sum())
    assert lr < stats.chi2.ppf(0.999, 3)
    assert fit.mixing.var() < 0.15
    assert np.all(np.abs(fit.mu + fit.gamma_vec * fit.mixing.mean()) < 0.05)
    v = np.diag(fit.covariance())
    assert np.all((v > 0.9) & (v < 1.1))


def test_mnormal_is_sample_correlation():
    x = np.random.default_rng(1).multivariate_normal(np.zeros(3), SIGMA3, 500)
    fit = fit_em(x, "MNormal")
    np.testing.assert_allclose(fit.dispersion, np.corrcoef(x, rowvar=False))
    assert isinstance(fit.mixing, Degenerate)
    assert fit_mnormal(x).loglik == fit.loglik


def test_singular_input():
    x = np.random.default_rng(0).standard_normal((200, 2))
    with pytest.raises(SingularDispersion):
        fit_em(np.column_stack([x, x[:, 0]]), "MGH")


def test_too_few_rows():
    with pytest.raises(DomainError):
        fit_em(np.random.default_rng(0).standard_normal((50, 3)), "MGH")


def test_unknown_family():
    with pytest.raises(DomainError):
        fit_em(np.random.default_rng(0).standard_normal((100, 2)), "MVT")


def test_json_round_trip(mgh_fit):
    d = json.loads(mgh_fit.to_json())
    back = MixtureFit.from_dict(d)
    np.testing.assert_allclose(back.dispersion, mgh_fit.dispersion)
    assert back.mixing == mgh_fit.mixing
    assert d["family"] == "MGH" and len(d["dispersion"]) == 9


def test_projection():
    fit = _mgh3()
    law = bivariate_margin(fit, 0, 2)
    np.testing.assert_allclose(law.sigma, SIGMA3[np.ix_([0, 2], [0, 2])])
    again = bivariate_margin(MixtureFit("MGH", law.mu, law.gamma, law.sigma, law.mixing), 0, 1)
    np.testing.assert_array_equal(again.mu, law.mu)
    np.testing.assert_array_equal(again.gamma, law.gamma)
    np.testing.assert_array_equal(again.sigma, law.sigma)


def test_projection_errors():
    with pytest.raises(IndexOutOfRange):
        bivariate_margin(_mgh3(), 0, 3)
    with pytest.raises(IndexOutOfRange):
        bivariate_margin(_mgh3(), 1, 1)


def test_diagonal_dispersion():
    fit = MixtureFit("MGH", np.zeros(3), np.zeros(3), np.eye(3), _gig())
    assert bivariate_margin(fit, 0, 1).rho == 0.0


def test_mnts_margin_moments():
    fit = MixtureFit("MNTS", np.array([0.2, 0.0]), np.array([-0.2, 0.1]), SIGMA2,
                     TemperedStable(1.2, 1.0))
    law = bivariate_margin(fit, 0, 1, n_points=4096, halfwidth=30.0)
    x = fit.sample(np.random.default_rng(21), 400_000)
    for k, m in enumerate((law.margin_x, law.margin_y)):
        col = x[:, k]
        se_mean = col.std() / np.sqrt(col.size)
        assert abs(m.mean() - col.mean()) < 4 * se_mean
        se_var = np.sqrt(np.mean((col - col.mean()) ** 4) - col.var() ** 2) / np.sqrt(col.size)
        assert abs(m.var() - col.var()) < 4 * se_var


def test_pair_density_mass():
    law = _law(_gig(), gamma=(-0.1, -0.2))
    x, w = _gl(-12, 12, 160)
    xx, yy = np.meshgrid(x, x, indexing="ij")
    mass = np.sum(pair_density(law, xx, yy, epsrel=1e-8) * np.outer(w, w))
    assert mass == pytest.approx(1.0, abs=1e-4)


def test_pair_density_symmetry():
    law = _law(TemperedStable(1.2, 1.0), rho=0.3)
    x = np.array([0.3, -1.2, 2.0])
    y = np.array([0.8, 0.4, -1.5])
    np.testing.assert_allclose(pair_density(law, x, y), pair_density(law, -x, -y), rtol=1e-8)


def test_pair_density_matches_closed_form_gh():
    g = _gig()
    law = _law(g, gamma=(-0.1, -0.2), mu=(0.1, 0.05))
    pts = np.random.default_rng(6).uniform(-3, 3, (20, 2))
    ref = np.exp(gh_logpdf(pts, law.mu, law.gamma, law.sigma, g.lam, g.chi, g.psi))
    got = pair_density(law, pts[:, 0], pts[:, 1])
    np.testing.assert_allclose(got, ref, rtol=1e-6)


def test_rectangle_limits():
    law = _law(TemperedStable(1.2, 1.0))
    assert rectangle_prob(law, 12.0, 12.0) == pytest.approx(1.0, abs=1e-4)
    assert rectangle_prob(_law(TemperedStable(1.2, 1.0), rho=0.0), 0.0, 0.0) == pytest.approx(
        0.25, abs=1e-4)
    assert rectangle_prob(law, -40.0, 0.0) < 1e-10


def test_rectangle_margin_limit():
    law = _law(_gig(), gamma=(-0.1, -0.2))
    for x in (-2.0, -0.5, 1.0):
        assert rectangle_prob(law, x, 1e3) == pytest.approx(law.margin_x.cdf(x), abs=1e-7)
        assert rectangle_prob(law, 1e3, x) == pytest.approx(law.margin_y.cdf(x), abs=1e-7)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 3), st.floats(0, 3))
def test_rectangle_monotone(x, y, dx, dy):
    law = _law(TemperedStable(1.2, 1.0), gamma=(-0.2, -0.1), rho=0.6)
    p = rectangle_prob(law, x, y)
    assert 0.0 <= p <= rectangle_prob(law, x + dx, y) + 1e-14
    assert p <= rectangle_prob(law, x, y + dy) + 1e-14


@pytest.mark.parametrize("mixing, gamma, rho, x, y", [
    (GIG(-0.5, 1.0, 1.0), (-0.1, -0.2), 0.5, -1.5, -1.6),
    (GIG(1.0, 0.5, 2.0), (0.2, 0.0), -0.3, 0.0, 1.0),
    (TemperedStable(1.2, 1.0), (0.0, 0.0), 0.7, -1.0, -2.0),
    (TemperedStable(0.8, 0.5), (-0.2, -0.2), 0.4, -2.5, -1.0),
    (TemperedStable(1.6, 2.0), (0.1, -0.3), 0.0, 0.5, -0.5),
])
def test_rectangle_vs_tensor_quadrature(mixing, gamma, rho, x, y):
    law = _law(mixing, gamma=gamma, rho=rho)
    gx, wx = _gl(-14, x, 120)
    gy, wy = _gl(-14, y, 120)
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    ref = np.sum(pair_density(law, xx, yy, epsrel=1e-8) * np.outer(wx, wy))
    assert rectangle_prob(law, x, y) == pytest.approx(ref, abs=1e-4)


def test_degenerate_is_bvn():
    law = _law(Degenerate(), rho=0.45)
    pts = np.random.default_rng(2).uniform(-3, 3, (30, 2))
    got = rectangle_prob(law, pts[:, 0], pts[:, 1])
    np.testing.assert_allclose(got, bvn_cdf(pts[:, 0], pts[:, 1], 0.45), atol=1e-6)


def test_rectangle_mc_oracle():
    law = _law(TemperedStable(1.2, 1.0), gamma=(-0.2, -0.1), rho=0.6, mu=(0.2, 0.1))
    n = 10_000_000
    hits = 0
    rng = np.random.default_rng(31)
    for _ in range(10):
        z = law.sample(rng, n // 10)
        hits += np.count_nonzero((z[:, 0] <= -1.5) & (z[:, 1] <= -1.6))
    est = hits / n
    se = np.sqrt(est * (1 - est) / n)
    assert abs(rectangle_prob(law, -1.5, -1.6) - est) < 3 * se


def test_law_validation():
    with pytest.raises(DomainError):
        BivariateLaw(Degenerate(), np.zeros(2), np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]))
