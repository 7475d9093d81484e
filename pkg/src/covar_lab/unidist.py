"""
Zero-mean, unit-variance innovation laws.

Four families are available:

- :class:`Normal`
- :class:`SkewT` -- Fernandez-Steel skew-t standardized to mean 0 and
  variance 1 (the ``sstd`` parameterization)
- :func:`std_nts` -- standardized normal tempered stable
- :func:`std_gh` -- standardized generalized hyperbolic

NTS and GH laws are :class:`MeanVarianceMixture` objects whose CDF is
tabulated once by FFT inversion of the characteristic function.  The same
class, without the standardization, represents the one-dimensional margins
of the multivariate mixture models.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats
from scipy.special import beta as beta_fn
from scipy.special import gammaln, ndtr, ndtri

from .errors import DomainError, OutOfRange
from .fourier import CdfTable, cf_to_cdf_table
from .mixing import GIG, Degenerate, TemperedStable, gh_logpdf

__all__ = [
    "InnovationDist",
    "Normal",
    "SkewT",
    "MeanVarianceMixture",
    "std_nts",
    "std_gh",
    "cf_to_cdf_table",
    "CdfTable",
]

FFT_POINTS = 2**14
FFT_HALFWIDTH = 40.0


def _check_p(p):
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise OutOfRange("quantile probabilities must lie strictly inside (0, 1)")
    return p


def _out(x):
    return x if np.ndim(x) else float(x)


class InnovationDist:
    """Interface shared by all innovation laws."""

    family = "abstract"

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, p):
        raise NotImplementedError

    def mean(self):
        return 0.0

    def var(self):
        return 1.0

    def params(self):
        return {}

    def to_dict(self):
        return {"family": self.family, **self.params()}


@dataclass(frozen=True)
class Normal(InnovationDist):
    family = "Normal"

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return _out(np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * x * x - 0.5 * np.log(2.0 * np.pi)

    def cdf(self, x):
        return _out(ndtr(np.asarray(x, dtype=float)))

    def quantile(self, p):
        return _out(ndtri(_check_p(p)))


@dataclass(frozen=True)
class SkewT(InnovationDist):
    """
    Standardized Fernandez-Steel skew-t.

    Parameters
    ----------
    nu : float
        Degrees of freedom, > 2.
    xi : float
        Skewness, > 0; ``xi = 1`` gives the symmetric unit-variance t.
    """

    nu: float
    xi: float = 1.0
    family = "SkewT"

    def __post_init__(self):
        if not (self.nu > 2 and self.xi > 0):
            raise DomainError(f"skew-t needs nu > 2 and xi > 0, got nu={self.nu}, xi={self.xi}")

    @cached_property
    def _consts(self):
        nu, xi = self.nu, self.xi
        m1 = 2.0 * np.sqrt(nu - 2.0) / (nu - 1.0) / beta_fn(0.5, 0.5 * nu)
        mu = m1 * (xi - 1.0 / xi)
        sigma = np.sqrt((1.0 - m1 ** 2) * (xi ** 2 + xi ** -2) + 2.0 * m1 ** 2 - 1.0)
        g = 2.0 / (xi + 1.0 / xi)
        s = np.sqrt(nu / (nu - 2.0))
        return mu, sigma, g, s

    # unit-variance symmetric t
    def _std_logpdf(self, z):
        s, nu = self._consts[3], self.nu
        return self._log_norm + np.log(s) - 0.5 * (nu + 1.0) * np.log1p((z * s) ** 2 / nu)

    @cached_property
    def _log_norm(self):
        nu = self.nu
        return gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)

    def _std_cdf(self, z):
        return stats.t.cdf(z * self._consts[3], self.nu)

    def _std_ppf(self, p):
        return stats.t.ppf(p, self.nu) / self._consts[3]

    def logpdf(self, x):
        mu, sigma, g, _ = self._consts
        z = np.asarray(x, dtype=float) * sigma + mu
        scale = np.where(z >= 0, self.xi, 1.0 / self.xi)
        return np.log(g) + self._std_logpdf(z / scale) + np.log(sigma)

    def dlogpdf(self, x):
        """Derivative of :meth:`logpdf` in ``x``."""
        mu, sigma, _, s = self._consts
        z = np.asarray(x, dtype=float) * sigma + mu
        scale = np.where(z >= 0, self.xi, 1.0 / self.xi)
        w2 = (z / scale * s) ** 2 / self.nu
        return -(self.nu + 1.0) * (z / scale) * s * s / self.nu / (1.0 + w2) * sigma / scale

    def pdf(self, x):
        return _out(np.exp(self.logpdf(x)))

    def cdf(self, x):
        mu, sigma, g, _ = self._consts
        xi = self.xi
        z = np.asarray(x, dtype=float) * sigma + mu
        lower = g / xi * self._std_cdf(np.minimum(z, 0.0) * xi)
        upper = 1.0 - g * xi * self._std_cdf(-np.maximum(z, 0.0) / xi)
        return _out(np.where(z < 0, lower, upper))

    def quantile(self, p):
        p = _check_p(p)
        mu, sigma, g, _ = self._consts
        xi = self.xi
        p0 = g / (2.0 * xi)
        lo = self._std_ppf(np.minimum(p, p0) * xi / g) / xi
        hi = -xi * self._std_ppf(np.minimum((1.0 - p) / (g * xi), 0.5))
        z = np.where(p < p0, lo, hi)
        return _out((z - mu) / sigma)

    def params(self):
        return {"nu": float(self.nu), "xi": float(self.xi)}


@dataclass(frozen=True)
class MeanVarianceMixture(InnovationDist):
    """
    One-dimensional normal mean-variance mixture
    ``X = mu + gamma*W + sigma*sqrt(W)*Z``.

    CDF and quantile come from a :class:`CdfTable` built by FFT inversion of
    the characteristic function ``exp(i u mu) * L(sigma^2 u^2/2 - i u gamma)``,
    with ``L`` the Laplace transform of the mixing law.  The grid is centred
    at the mean and spans ``halfwidth`` standard deviations each side.
    """

    mixing: object
    mu: float = 0.0
    gamma: float = 0.0
    sigma: float = 1.0
    n_points: int = FFT_POINTS
    halfwidth: float = FFT_HALFWIDTH
    label: str = field(default="Mixture", compare=False)

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError("mixture scale sigma must be positive")

    @property
    def family(self):
        return self.label

    def mean(self):
        return self.mu + self.gamma * self.mixing.mean()

    def var(self):
        return self.sigma ** 2 * self.mixing.mean() + self.gamma ** 2 * self.mixing.var()

    def cf(self, u):
        u = np.asarray(u, dtype=float)
        s = 0.5 * self.sigma ** 2 * u * u - 1j * u * self.gamma
        return np.exp(1j * u * self.mu) * self.mixing.laplace(s)

    @cached_property
    def table(self):
        if isinstance(self.mixing, Degenerate):
            raise TypeError("Gaussian mixtures are handled in closed form")
        return cf_to_cdf_table(self.cf, n_points=self.n_points, domain_halfwidth=self.halfwidth,
                               center=self.mean(), scale=np.sqrt(self.var()))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if isinstance(self.mixing, GIG):
            m = self.mixing
            return gh_logpdf(x.reshape(-1, 1), [self.mu], [self.gamma], [[self.sigma ** 2]],
                             m.lam, m.chi, m.psi).reshape(x.shape)
        if isinstance(self.mixing, Degenerate):
            z = (x - self.mu - self.gamma) / self.sigma
            return -0.5 * z * z - np.log(self.sigma) - 0.5 * np.log(2.0 * np.pi)
        with np.errstate(divide="ignore"):
            return np.log(self.table.pdf(x))

    def pdf(self, x):
        return _out(np.exp(self.logpdf(x)))

    def cdf(self, x):
        if isinstance(self.mixing, Degenerate):
            return _out(ndtr((np.asarray(x, dtype=float) - self.mu - self.gamma) / self.sigma))
        return self.table.cdf(x)

    def quantile(self, p):
        p = _check_p(p)
        if isinstance(self.mixing, Degenerate):
            return _out(self.mu + self.gamma + self.sigma * ndtri(p))
        return self.table.quantile(p)

    def params(self):
        return {"mu": float(self.mu), "gamma": float(self.gamma), "sigma": float(self.sigma),
                **self.mixing.params()}


def std_nts(alpha, theta, beta, n_points=FFT_POINTS, halfwidth=FFT_HALFWIDTH):
    """
    Standardized normal tempered stable law
    ``beta*(T - 1) + g*sqrt(T)*Z`` with ``g**2 = 1 - beta**2 (2 - alpha)/(2 theta)``.
    """
    g2 = 1.0 - beta ** 2 * (2.0 - alpha) / (2.0 * theta)
    if g2 <= 0:
        raise DomainError(f"std NTS needs beta^2 (2-alpha)/(2 theta) < 1, got {g2:.4g} residual")
    return MeanVarianceMixture(TemperedStable(alpha, theta), mu=-beta, gamma=beta,
                               sigma=np.sqrt(g2), n_points=n_points, halfwidth=halfwidth,
                               label="StdNTS")


def std_gh(lam, chi, psi, gamma, n_points=FFT_POINTS, halfwidth=FFT_HALFWIDTH):
    """
    Standardized generalized hyperbolic law: GIG(lam, chi, psi) mixing, with
    location and scale set from the closed-form GIG moments so that the
    result has mean 0 and variance 1.
    """
    mix = GIG(lam, chi, psi)
    ew, vw = mix.mean(), mix.var()
    s2 = (1.0 - gamma ** 2 * vw) / ew
    if s2 <= 0:
        raise DomainError("std GH needs gamma^2 Var(W) < 1")
    return MeanVarianceMixture(mix, mu=-gamma * ew, gamma=gamma, sigma=np.sqrt(s2),
                               n_points=n_points, halfwidth=halfwidth, label="StdGH")
