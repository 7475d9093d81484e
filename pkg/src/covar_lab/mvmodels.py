"""
Multivariate normal mean-variance mixtures and their bivariate projections.

A fitted model is ``X = mu + gamma*W + sqrt(W) A Z`` with ``A A' = Sigma``
and ``W`` a positive mixing variable normalized to ``E[W] = 1``:

- ``MNormal``: ``W = 1``
- ``MGH``: ``W ~ GIG(lam, chi, psi)``
- ``MNTS``: ``W`` a tempered-stable subordinator (one ``alpha, theta`` pair
  shared by all coordinates, one skew entry per coordinate)

Projection onto a pair of coordinates keeps the mixing law and slices
``(mu, gamma, Sigma)``, so every pair law is again a mixture of bivariate
normals.  Rectangle probabilities integrate the bivariate normal CDF against
the mixing law.
"""
import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, optimize

from .bvn import bvn_cdf
from .errors import (DomainError, IndexOutOfRange, NonConvergent, NumericalFailure,
                     SingularDispersion)
from .mixing import GIG, Degenerate, TemperedStable, gh_logpdf, gig_moments, lse
from .unidist import FFT_HALFWIDTH, FFT_POINTS, MeanVarianceMixture

__all__ = [
    "MixtureFit",
    "BivariateLaw",
    "fit_em",
    "fit_mnormal",
    "bivariate_margin",
    "pair_density",
    "rectangle_prob",
    "EMConfig",
]

FAMILIES = ("MNormal", "MGH", "MNTS")

# bounds for the mixing parameters during estimation
GH_LAM_BOUNDS = (-10.0, 10.0)
GH_LOG_BOUNDS = (np.log(1e-6), np.log(1e4))
NTS_ALPHA_BOUNDS = (0.5, 1.95)
NTS_THETA_BOUNDS = (0.05, 50.0)


@dataclass(frozen=True)
class EMConfig:
    """Stopping rules and numerical settings for :func:`fit_em`."""

    tol: float = 1e-7
    max_iter: int = 500
    slack: float = 1e-8
    nts_grid: int = 480
    nts_grid_range: tuple = (1e-3, 100.0)
    mixing_maxiter: int = 5


def _mixing_from(family, params):
    if family == "MNormal":
        return Degenerate()
    if family == "MGH":
        return GIG(params["lam"], params["chi"], params["psi"])
    if family == "MNTS":
        return TemperedStable(params["alpha"], params["theta"])
    raise DomainError(f"unknown mixture family {family!r}")


@dataclass(frozen=True)
class MixtureFit:
    """
    Fitted d-variate mixture.

    Attributes
    ----------
    family : str
        ``"MNormal"``, ``"MGH"`` or ``"MNTS"``.
    mu, gamma_vec : ndarray, shape (d,)
    dispersion : ndarray, shape (d, d)
    mixing : mixing law
    loglik : float
    n_iter : int
    loglik_trace : tuple
        Observed-data log-likelihood after every EM iteration.
    """

    family: str
    mu: np.ndarray
    gamma_vec: np.ndarray
    dispersion: np.ndarray
    mixing: object
    loglik: float = float("nan")
    n_iter: int = 0
    loglik_trace: tuple = field(default=(), repr=False)
    converged: bool = True

    @property
    def dim(self):
        return self.mu.size

    @property
    def mixing_params(self):
        return self.mixing.params()

    def covariance(self):
        g = self.gamma_vec
        return self.mixing.mean() * self.dispersion + self.mixing.var() * np.outer(g, g)

    def logpdf(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if isinstance(self.mixing, GIG):
            m = self.mixing
            return gh_logpdf(x, self.mu, self.gamma_vec, self.dispersion, m.lam, m.chi, m.psi)
        nodes, wts = self.mixing.quadrature
        return _mixture_logpdf(x, self.mu, self.gamma_vec, self.dispersion, nodes, np.log(wts))

    def sample(self, rng, size):
        w = self.mixing.sample(rng, size)
        z = rng.standard_normal((size, self.dim)) @ np.linalg.cholesky(self.dispersion).T
        return self.mu + w[:, None] * self.gamma_vec + np.sqrt(w)[:, None] * z

    def to_dict(self):
        return {
            "family": self.family,
            "mu": self.mu.tolist(),
            "gamma": self.gamma_vec.tolist(),
            "dispersion": self.dispersion.ravel().tolist(),
            "dim": int(self.dim),
            "mixing": self.mixing_params,
            "loglik": float(self.loglik),
            "n_iter": int(self.n_iter),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        dim = d["dim"]
        return cls(family=d["family"], mu=np.asarray(d["mu"], float),
                   gamma_vec=np.asarray(d["gamma"], float),
                   dispersion=np.asarray(d["dispersion"], float).reshape(dim, dim),
                   mixing=_mixing_from(d["family"], d["mixing"]), loglik=d["loglik"],
                   n_iter=d["n_iter"])


def _quad_forms(x, mu, gamma, sigma):
    """(x-mu)' S^-1 (x-mu), (x-mu)' S^-1 gamma, gamma' S^-1 gamma and log|S|."""
    try:
        chol = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError as exc:
        raise SingularDispersion("dispersion matrix is not positive definite") from exc
    z = np.linalg.solve(chol, (x - mu).T)
    zg = np.linalg.solve(chol, gamma)
    return (z * z).sum(axis=0), zg @ z, zg @ zg, 2.0 * np.log(np.diag(chol)).sum()


def _mixture_log_kernel(x, mu, gamma, sigma, nodes):
    """log N(x; mu + gamma t, t Sigma) for every row of x and node t, shape (n, K)."""
    d = x.shape[1]
    a, b, c, logdet = _quad_forms(x, mu, gamma, sigma)
    t = nodes[None, :]
    return (-0.5 * d * np.log(2.0 * np.pi * t) - 0.5 * logdet
            - 0.5 * (a[:, None] / t - 2.0 * b[:, None] + c * t))


def _mixture_logpdf(x, mu, gamma, sigma, nodes, log_wts):
    return lse(_mixture_log_kernel(x, mu, gamma, sigma, nodes) + log_wts, axis=1)


def _check_input(x):
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise DomainError("residuals must be an n x d matrix with d >= 2")
    n, d = x.shape
    if n < 20 * d:
        raise DomainError(f"need at least {20 * d} observations for d = {d}, got {n}")
    if not np.all(np.isfinite(x)):
        raise DomainError("residuals contain non-finite values")
    corr = np.corrcoef(x, rowvar=False)
    if not np.all(np.isfinite(corr)) or np.linalg.cond(corr) > 1e10:
        raise SingularDispersion("residual correlation matrix is (near) singular")
    return x


def fit_mnormal(residuals):
    """Gaussian dependence model: zero location, no skew, sample correlation."""
    x = _check_input(residuals)
    corr = np.corrcoef(x, rowvar=False)
    d = x.shape[1]
    fit = MixtureFit("MNormal", np.zeros(d), np.zeros(d), corr, Degenerate())
    ll = float(fit.logpdf(x).sum())
    return MixtureFit("MNormal", np.zeros(d), np.zeros(d), corr, Degenerate(), loglik=ll,
                      n_iter=0, loglik_trace=(ll,))


def _location_update(x, delta, eta):
    """Closed-form maximizer of the normal part of the complete-data likelihood."""
    n = x.shape[0]
    d_bar, e_bar = delta.mean(), eta.mean()
    x_bar = x.mean(axis=0)
    denom = d_bar * e_bar - 1.0
    if denom <= 1e-12:
        gamma = np.zeros(x.shape[1])
    else:
        gamma = (delta[:, None] * (x_bar - x)).mean(axis=0) / denom
    mu = ((delta[:, None] * x).mean(axis=0) - gamma) / d_bar
    dev = x - mu
    sigma = (delta[:, None] * dev).T @ dev / n - e_bar * np.outer(gamma, gamma)
    sigma = 0.5 * (sigma + sigma.T)
    return mu, gamma, sigma


class _EMTrace:
    def __init__(self, slack):
        self.values = []
        self.slack = slack

    def push(self, ll):
        if self.values and ll < self.values[-1] - self.slack * max(1.0, abs(self.values[-1])):
            raise NumericalFailure("EM step decreased the log-likelihood")
        self.values.append(float(ll))

    def converged(self, tol):
        if len(self.values) < 2:
            return False
        prev, cur = self.values[-2], self.values[-1]
        return (cur - prev) < tol * max(1.0, abs(prev))


def _gh_estep(x, mu, gamma, sigma, lam, chi, psi):
    d = x.shape[1]
    q, _, c, _ = _quad_forms(x, mu, gamma, sigma)
    e_w, e_inv, e_log = gig_moments(lam - 0.5 * d, chi + q, psi + c)
    return e_inv, e_w, e_log


def _gig_q(params, n, s_delta, s_eta, s_xi):
    lam, lchi, lpsi = params
    chi, psi = np.exp(lchi), np.exp(lpsi)
    om = np.sqrt(chi * psi)
    from .mixing import log_bessel_k

    return (n * (0.5 * lam * (lpsi - lchi) - np.log(2.0) - log_bessel_k(lam, om))
            + (lam - 1.0) * s_xi - 0.5 * chi * s_delta - 0.5 * psi * s_eta)


def _normalize_gh(mu, gamma, sigma, lam, chi, psi):
    k = 1.0 / GIG(lam, chi, psi).mean()
    return mu, gamma / k, sigma / k, lam, chi * k, psi / k


def _fit_mgh(x, cfg, start=None):
    n, d = x.shape
    mu = x.mean(axis=0)
    gamma = np.zeros(d)
    sigma = np.cov(x, rowvar=False)
    lam, chi, psi = start if start is not None else (1.0, 1.0, 1.0)
    mu, gamma, sigma, lam, chi, psi = _normalize_gh(mu, gamma, sigma, lam, chi, psi)

    def loglik(mu, gamma, sigma, lam, chi, psi):
        return float(gh_logpdf(x, mu, gamma, sigma, lam, chi, psi).sum())

    trace = _EMTrace(cfg.slack)
    trace.push(loglik(mu, gamma, sigma, lam, chi, psi))
    bounds = [GH_LAM_BOUNDS, GH_LOG_BOUNDS, GH_LOG_BOUNDS]
    it = 0
    for it in range(1, cfg.max_iter + 1):
        # CM step 1: location, skew, dispersion
        delta, eta, _ = _gh_estep(x, mu, gamma, sigma, lam, chi, psi)
        mu1, g1, s1 = _location_update(x, delta, eta)
        if np.all(np.linalg.eigvalsh(s1) > 0):
            ll1 = loglik(mu1, g1, s1, lam, chi, psi)
            if ll1 >= trace.values[-1]:
                mu, gamma, sigma = mu1, g1, s1
        # CM step 2: mixing parameters, after a fresh E-step
        delta, eta, xi = _gh_estep(x, mu, gamma, sigma, lam, chi, psi)
        sums = (n, delta.sum(), eta.sum(), xi.sum())
        p0 = np.clip([lam, np.log(chi), np.log(psi)], [b[0] for b in bounds],
                     [b[1] for b in bounds])
        res = optimize.minimize(lambda p: -_gig_q(p, *sums), p0, method="L-BFGS-B",
                                bounds=bounds)
        ll_cur = loglik(mu, gamma, sigma, lam, chi, psi)
        if np.isfinite(res.fun) and -res.fun > _gig_q(p0, *sums):
            cand = (res.x[0], np.exp(res.x[1]), np.exp(res.x[2]))
            ll2 = loglik(mu, gamma, sigma, *cand)
            if ll2 >= ll_cur:
                lam, chi, psi = cand
                ll_cur = ll2
        mu, gamma, sigma, lam, chi, psi = _normalize_gh(mu, gamma, sigma, lam, chi, psi)
        trace.push(ll_cur)
        if trace.converged(cfg.tol):
            break
    converged = trace.converged(cfg.tol)
    return MixtureFit("MGH", mu, gamma, sigma, GIG(lam, chi, psi), loglik=trace.values[-1],
                      n_iter=it, loglik_trace=tuple(trace.values), converged=converged)


class _TSGrid:
    """Fixed log-spaced node set carrying tempered-stable weights."""

    def __init__(self, n, lo, hi):
        self.nodes = np.geomspace(lo, hi, n)
        self.dlog = np.log(hi / lo) / (n - 1)

    def log_weights(self, alpha, theta):
        lp = TemperedStable(alpha, theta).logpdf(self.nodes) + np.log(self.nodes)
        return lp - lse(lp)


def _fit_mnts(x, cfg, start=None):
    n, d = x.shape
    grid = _TSGrid(cfg.nts_grid, *cfg.nts_grid_range)
    nodes = grid.nodes
    alpha, theta = start if start is not None else (1.2, 1.0)
    mu = x.mean(axis=0)
    gamma = np.zeros(d)
    sigma = np.cov(x, rowvar=False)
    log_w = grid.log_weights(alpha, theta)

    def loglik_from(kernel, log_w):
        return float(lse(kernel + log_w, axis=1).sum())

    kernel = _mixture_log_kernel(x, mu, gamma, sigma, nodes)
    trace = _EMTrace(cfg.slack)
    trace.push(loglik_from(kernel, log_w))
    lo = np.array([NTS_ALPHA_BOUNDS[0], np.log(NTS_THETA_BOUNDS[0])])
    hi = np.array([NTS_ALPHA_BOUNDS[1], np.log(NTS_THETA_BOUNDS[1])])
    it = 0
    for it in range(1, cfg.max_iter + 1):
        # E-step over the discrete mixing measure
        joint = kernel + log_w
        post = np.exp(joint - lse(joint, axis=1, keepdims=True))
        delta = post @ (1.0 / nodes)
        eta = post @ nodes
        mu1, g1, s1 = _location_update(x, delta, eta)
        if np.all(np.linalg.eigvalsh(s1) > 0):
            k1 = _mixture_log_kernel(x, mu1, g1, s1, nodes)
            ll1 = loglik_from(k1, log_w)
            if ll1 >= trace.values[-1]:
                mu, gamma, sigma, kernel = mu1, g1, s1, k1
        ll_cur = loglik_from(kernel, log_w)

        # conditional maximization of the observed likelihood in (alpha, theta)
        def objective(p):
            return -loglik_from(kernel, grid.log_weights(p[0], np.exp(p[1])))

        p0 = np.clip([alpha, np.log(theta)], lo, hi)
        res = optimize.minimize(objective, p0, method="L-BFGS-B", bounds=list(zip(lo, hi)),
                                options={"maxiter": cfg.mixing_maxiter})
        if np.isfinite(res.fun) and -res.fun > ll_cur:
            alpha, theta = float(res.x[0]), float(np.exp(res.x[1]))
            log_w = grid.log_weights(alpha, theta)
            ll_cur = -res.fun
        trace.push(ll_cur)
        if trace.converged(cfg.tol):
            break
    converged = trace.converged(cfg.tol)
    return MixtureFit("MNTS", mu, gamma, sigma, TemperedStable(alpha, theta),
                      loglik=trace.values[-1], n_iter=it, loglik_trace=tuple(trace.values),
                      converged=converged)


def fit_em(residuals, family, config=None, start=None):
    """
    Fit a multivariate mixture by expectation-maximization.

    Parameters
    ----------
    residuals : array_like, shape (n, d)
        Standardized GARCH residuals.
    family : {"MNormal", "MGH", "MNTS"}
    config : EMConfig, optional
    start : tuple, optional
        Starting mixing parameters, ``(lam, chi, psi)`` or ``(alpha, theta)``.

    Returns
    -------
    MixtureFit
        ``loglik_trace`` records the observed-data log-likelihood after every
        iteration; it is nondecreasing by construction (every conditional
        step is accepted only if it does not lower the likelihood).

    Raises
    ------
    SingularDispersion
        Near-singular residual correlation (condition number above 1e10).
    NonConvergent
        Iteration cap reached while the likelihood was still moving by more
        than a hundred times the tolerance.
    """
    cfg = config or EMConfig()
    x = _check_input(residuals)
    if family == "MNormal":
        return fit_mnormal(x)
    if family == "MGH":
        fit = _fit_mgh(x, cfg, start)
    elif family == "MNTS":
        fit = _fit_mnts(x, cfg, start)
    else:
        raise DomainError(f"unknown mixture family {family!r}")
    if not fit.converged:
        ll = fit.loglik_trace
        if ll[-1] - ll[-2] > 100.0 * cfg.tol * max(1.0, abs(ll[-2])):
            raise NonConvergent(f"{family} EM still moving after {cfg.max_iter} iterations")
    return fit


@dataclass(frozen=True)
class BivariateLaw:
    """
    Law of a (system, bank) pair: ``mu + gamma*W + sqrt(W) A Z`` in two
    dimensions.  Coordinate 0 is the system, coordinate 1 the bank.
    """

    mixing: object
    mu: np.ndarray
    gamma: np.ndarray
    sigma: np.ndarray
    n_points: int = FFT_POINTS
    halfwidth: float = FFT_HALFWIDTH

    def __post_init__(self):
        s = self.sigma
        if not (s[0, 0] > 0 and s[1, 1] > 0 and abs(self.rho) <= 1):
            raise DomainError("pair dispersion must be positive definite")

    @property
    def rho(self):
        s = self.sigma
        return float(s[0, 1] / np.sqrt(s[0, 0] * s[1, 1]))

    def _margin(self, k):
        return MeanVarianceMixture(self.mixing, mu=float(self.mu[k]), gamma=float(self.gamma[k]),
                                   sigma=float(np.sqrt(self.sigma[k, k])), n_points=self.n_points,
                                   halfwidth=self.halfwidth)

    @cached_property
    def margin_x(self):
        return self._margin(0)

    @cached_property
    def margin_y(self):
        return self._margin(1)

    @property
    def pair_params(self):
        return {"mu": self.mu.tolist(), "gamma": self.gamma.tolist(),
                "sigma": self.sigma.ravel().tolist(), **self.mixing.params()}

    def sample(self, rng, size):
        w = self.mixing.sample(rng, size)
        z = rng.standard_normal((size, 2)) @ np.linalg.cholesky(self.sigma).T
        return self.mu + w[:, None] * self.gamma + np.sqrt(w)[:, None] * z


def bivariate_margin(fit, i, j, n_points=FFT_POINTS, halfwidth=FFT_HALFWIDTH):
    """
    Project a fitted mixture onto coordinates ``(i, j)``.  ``n_points`` and
    ``halfwidth`` set the FFT grid of the one-dimensional margins.
    """
    d = fit.dim
    for k in (i, j):
        if not (isinstance(k, (int, np.integer)) and 0 <= k < d):
            raise IndexOutOfRange(f"coordinate {k} outside 0..{d - 1}")
    if i == j:
        raise IndexOutOfRange("a pair needs two distinct coordinates")
    idx = [i, j]
    return BivariateLaw(fit.mixing, fit.mu[idx].copy(), fit.gamma_vec[idx].copy(),
                        fit.dispersion[np.ix_(idx, idx)].copy(), n_points, halfwidth)


def _bvn_logpdf(x, y, law, w):
    s = law.sigma
    sx, sy, r = np.sqrt(s[0, 0] * w), np.sqrt(s[1, 1] * w), law.rho
    zx = (x - law.mu[0] - law.gamma[0] * w) / sx
    zy = (y - law.mu[1] - law.gamma[1] * w) / sy
    q = (zx * zx - 2.0 * r * zx * zy + zy * zy) / (1.0 - r * r)
    return -0.5 * q - np.log(2.0 * np.pi * sx * sy * np.sqrt(1.0 - r * r))


def pair_density(law, x, y, epsrel=1e-10):
    """
    Joint density of a pair law at ``(x, y)`` (broadcast), by adaptive
    quadrature of the normal kernel against the mixing density in ``log w``.
    """
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    if isinstance(law.mixing, Degenerate):
        return np.exp(_bvn_logpdf(x, y, law, 1.0))
    lo, hi = law.mixing._support_bounds()

    def integrand(s):
        w = np.exp(s)
        return np.exp(_bvn_logpdf(x, y, law, w) + np.log(law.mixing.pdf(w)) + s)

    val, err = integrate.quad_vec(integrand, np.log(lo), np.log(hi), epsrel=epsrel,
                                  epsabs=1e-300, limit=400)
    if not np.all(np.isfinite(val)):
        raise NumericalFailure("pair density quadrature failed")
    return np.maximum(val, 0.0)


def rectangle_prob(law, x_hi, y_hi):
    """
    ``P(X <= x_hi, Y <= y_hi)`` for a pair law.

    Given ``W = w`` the pair is bivariate normal, so the probability is the
    mixing expectation of a bivariate normal CDF at the standardized bounds;
    the expectation uses the mixing law's cached quadrature rule.
    """
    x_hi, y_hi = np.broadcast_arrays(np.asarray(x_hi, float), np.asarray(y_hi, float))
    nodes, wts = law.mixing.quadrature
    s = law.sigma
    sx, sy = np.sqrt(s[0, 0] * nodes), np.sqrt(s[1, 1] * nodes)
    a = (x_hi[..., None] - law.mu[0] - law.gamma[0] * nodes) / sx
    b = (y_hi[..., None] - law.mu[1] - law.gamma[1] * nodes) / sy
    p = bvn_cdf(a, b, law.rho) @ wts
    p = np.clip(p, 0.0, 1.0)
    return p if p.ndim else float(p)
