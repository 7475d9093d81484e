"""
Positive mixing laws for normal mean-variance mixtures.

A mixture is ``X = mu + gamma*W + sqrt(W)*A Z`` with ``W`` one of the laws
below.  Every law exposes its Laplace transform (which gives the mixture's
characteristic function), its first two moments, a density, a quadrature
rule for integrals ``E[h(W)]`` and a sampler.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import kve, roots_legendre

from .errors import DomainError, NumericalFailure
from .fourier import density_on_grid

__all__ = [
    "Degenerate",
    "GIG",
    "TemperedStable",
    "log_bessel_k",
    "gig_moments",
    "gh_logpdf",
]

_TAIL = 1e-14


def _zolotarev_rule():
    # uniform panels on (0, pi) plus geometric grading towards pi, where the
    # integrand concentrates for large arguments
    x, w = roots_legendre(16)
    gaps = np.pi * np.geomspace(1e-9, 1.0 / 32.0, 24)
    edges = np.unique(np.concatenate([np.linspace(0.0, np.pi, 33), np.pi - gaps]))
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * x).ravel(), (half[:, None] * w).ravel()


_ZOLOTAREV_RULE = _zolotarev_rule()


def lse(a, axis=None, b=None, keepdims=False):
    """``log(sum(b * exp(a)))`` along ``axis``; a lean stand-in for scipy's
    logsumexp on the hot paths (positive weights only)."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a - m)
    if b is not None:
        e = e * b
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(e, axis=axis, keepdims=True)) + m
    return out if keepdims else np.squeeze(out, axis=axis) if axis is not None else out.reshape(())[()]


def log_bessel_k(nu, z):
    """log K_nu(z) for real z > 0, stable for large arguments."""
    return np.log(kve(nu, z)) - z


def gig_moments(lam, chi, psi, h=1e-5):
    """
    Conditional-moment triple of GIG(lam, chi, psi): E[W], E[1/W], E[log W].

    Broadcasts over array arguments.  The derivative of log K with respect
    to its order is taken by a central difference.
    """
    omega = np.sqrt(chi * psi)
    ratio = np.sqrt(chi / psi)
    lk = log_bessel_k(lam, omega)
    e_w = ratio * np.exp(log_bessel_k(lam + 1.0, omega) - lk)
    e_inv = np.exp(log_bessel_k(lam - 1.0, omega) - lk) / ratio
    dlk = (log_bessel_k(lam + h, omega) - log_bessel_k(lam - h, omega)) / (2.0 * h)
    e_log = np.log(ratio) + dlk
    return e_w, e_inv, e_log


def _gl_log_rule(pdf, lo, hi, n_panels, order=16):
    """Composite Gauss-Legendre rule in log w on [lo, hi], weights include pdf."""
    x, w = roots_legendre(order)
    edges = np.linspace(np.log(lo), np.log(hi), n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    logw = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    nodes = np.exp(logw)
    return nodes, wts * nodes * pdf(nodes)


class _MixingLaw:
    """Shared machinery; subclasses define pdf, laplace, mean, var, sample."""

    def _support_bounds(self):
        m, s = self.mean(), np.sqrt(self.var())
        grid = np.geomspace(1e-10 * m, m + 400.0 * s + 50.0 * m, 3000)
        dens = self.pdf(grid) * grid
        dl = np.diff(np.log(grid))
        seg = 0.5 * (dens[1:] + dens[:-1]) * dl
        left = np.concatenate([[0.0], np.cumsum(seg)])
        right = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
        total = left[-1]
        if not np.isfinite(total) or total <= 0:
            raise NumericalFailure("mixing density has no mass on the search grid")
        lo_idx = np.searchsorted(left / total, _TAIL) - 1
        hi_idx = len(grid) - np.searchsorted((right / total)[::-1], _TAIL)
        lo = grid[max(lo_idx, 0)]
        hi = grid[min(hi_idx, len(grid) - 1)]
        return lo, hi

    @cached_property
    def quadrature(self):
        """
        Nodes and (normalized) weights for ``E[h(W)] ~ sum(weights*h(nodes))``.

        Composite Gauss-Legendre in log w over the range holding all but
        1e-14 of the mass; the panel count doubles until the mass and mean
        stabilize to 1e-10.
        """
        lo, hi = self._support_bounds()
        prev = None
        for n_panels in (8, 16, 32, 64, 128, 256):
            nodes, wts = _gl_log_rule(self.pdf, lo, hi, n_panels)
            stats = np.array([wts.sum(), wts @ nodes])
            if prev is not None and np.all(np.abs(stats - prev) < 1e-10 * np.maximum(1, np.abs(stats))):
                break
            prev = stats
        mass = wts.sum()
        if abs(mass - 1.0) > 1e-4:
            raise NumericalFailure(f"mixing quadrature mass {mass:.8f}")
        return nodes, wts / mass


@dataclass(frozen=True)
class Degenerate(_MixingLaw):
    """Point mass at one; turns a mixture into a Gaussian law."""

    def laplace(self, s):
        return np.exp(-np.asarray(s))

    def mean(self):
        return 1.0

    def var(self):
        return 0.0

    def pdf(self, w):
        raise NotImplementedError("a point mass has no density")

    @cached_property
    def quadrature(self):
        return np.array([1.0]), np.array([1.0])

    def sample(self, rng, size):
        return np.ones(size)

    def params(self):
        return {}


@dataclass(frozen=True)
class GIG(_MixingLaw):
    """Generalized inverse Gaussian law with density proportional to
    ``w**(lam-1) * exp(-(chi/w + psi*w)/2)``."""

    lam: float
    chi: float
    psi: float

    def __post_init__(self):
        if not (self.chi > 0 and self.psi > 0 and np.isfinite(self.lam)):
            raise DomainError(f"GIG needs chi > 0 and psi > 0, got {self}")

    @property
    def omega(self):
        return np.sqrt(self.chi * self.psi)

    def moment(self, r):
        om = self.omega
        return (self.chi / self.psi) ** (r / 2) * np.exp(
            log_bessel_k(self.lam + r, om) - log_bessel_k(self.lam, om))

    def mean(self):
        return float(self.moment(1.0))

    def var(self):
        return float(self.moment(2.0) - self.moment(1.0) ** 2)

    def logpdf(self, w):
        w = np.asarray(w, dtype=float)
        lam, chi, psi = self.lam, self.chi, self.psi
        with np.errstate(divide="ignore"):
            out = (0.5 * lam * np.log(psi / chi) - np.log(2.0) - log_bessel_k(lam, self.omega)
                   + (lam - 1.0) * np.log(w) - 0.5 * (chi / w + psi * w))
        return np.where(w > 0, out, -np.inf)

    def pdf(self, w):
        return np.exp(self.logpdf(w))

    def laplace(self, s):
        """E[exp(-s W)] for complex s with Re(s) >= 0."""
        s = np.asarray(s, dtype=complex)
        lam, chi, psi = self.lam, self.chi, self.psi
        z0 = self.omega
        z1 = np.sqrt(chi * (psi + 2.0 * s))
        with np.errstate(all="ignore"):
            val = ((psi / (psi + 2.0 * s)) ** (lam / 2.0) * kve(lam, z1) / kve(lam, z0)
                   * np.exp(-(z1 - z0)))
        return np.where(np.isfinite(val), val, 0.0)

    def scaled(self, k):
        """Law of ``k*W``."""
        return GIG(self.lam, self.chi * k, self.psi / k)

    def sample(self, rng, size):
        from scipy.stats import geninvgauss

        return np.sqrt(self.chi / self.psi) * geninvgauss.rvs(
            self.lam, self.omega, size=size, random_state=rng)

    def params(self):
        return {"lam": float(self.lam), "chi": float(self.chi), "psi": float(self.psi)}


@dataclass(frozen=True)
class TemperedStable(_MixingLaw):
    """
    Tempered-stable subordinator with unit mean.

    Laplace transform ``exp(-(2 theta**(1-a/2)/a) * ((theta+s)**(a/2) - theta**(a/2)))``
    with ``a = alpha`` in (0, 2) and ``theta > 0``; variance ``(2-a)/(2 theta)``.
    The density is evaluated pointwise from Zolotarev's integral
    representation; :meth:`fft_density` gives the Fourier-inversion route.
    """

    alpha: float
    theta: float
    n_fft: int = 2**16

    def __post_init__(self):
        if not (0.0 < self.alpha < 2.0 and self.theta > 0):
            raise DomainError(f"tempered stable needs 0 < alpha < 2, theta > 0, got {self}")

    @property
    def _a(self):
        return 0.5 * self.alpha

    @property
    def _k(self):
        a = self._a
        return self.theta ** (1.0 - a) / a

    def laplace(self, s):
        s = np.asarray(s, dtype=complex)
        a, th = self._a, self.theta
        return np.exp(-self._k * ((th + s) ** a - th ** a))

    def mean(self):
        return 1.0

    def var(self):
        return (2.0 - self.alpha) / (2.0 * self.theta)

    def _upper_bound(self):
        # Chernoff bound P(T > t) <= exp(-s t) E[exp(s T)] at s = theta/2
        a, th = self._a, self.theta
        log_mgf = self._k * th ** a * (1.0 - 2.0 ** (-a))
        return 2.0 * (log_mgf - np.log(_TAIL)) / th

    def logpdf(self, w):
        """
        Log density via Zolotarev's integral for the positive stable law,
        exponentially tilted; the angular integral uses a graded composite
        Gauss-Legendre rule evaluated in log space.
        """
        w = np.atleast_1d(np.asarray(w, dtype=float))
        a, th, k = self._a, self.theta, self._k
        c = k ** (1.0 / a)
        x = np.where(w > 0, w / c, 1.0)
        phi, wts = _ZOLOTAREV_RULE
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            log_a = (a * np.log(np.sin(a * phi)) + (1 - a) * np.log(np.sin((1 - a) * phi))
                     - np.log(np.sin(phi))) / (1.0 - a)
            scale = np.exp(-a / (1.0 - a) * np.log(x))
            expo = log_a[None, :] - scale[:, None] * np.exp(log_a)[None, :]
            expo = np.where(np.isfinite(expo), expo, -np.inf)
            log_int = lse(expo, b=wts[None, :], axis=1)
            log_f1 = np.log(a / (1.0 - a)) - np.log(x) / (1.0 - a) - np.log(np.pi) + log_int
            out = -th * w + k * th ** a + log_f1 - np.log(c)
        return np.where(w > 0, out, -np.inf)

    def pdf(self, w):
        out = np.exp(self.logpdf(w))
        return out if np.ndim(w) else float(out[0])

    def fft_density(self, n=None):
        """Density on a uniform grid by FFT inversion of the characteristic
        function; an independent route used for cross-checks."""
        n = int(n or self.n_fft)
        t_hi = max(self._upper_bound(), 1.0 + 40.0 * np.sqrt(self.var()))
        period = 1.25 * t_hi
        dx = period / n
        x, f = density_on_grid(lambda u: self.laplace(-1j * u), -0.2 * t_hi, dx, n)
        keep = x >= 0.0
        return x[keep], np.maximum(f[keep], 0.0)

    def sample(self, rng, size):
        """
        Exact draws: T is split into m iid pieces, each an exponentially
        tilted positive stable variable drawn by Kanter's method and accepted
        with probability exp(-theta * S).
        """
        a, th, k = self._a, self.theta, self._k
        m = max(1, int(np.ceil(2.0 * th / a)))
        km = k / m
        total = np.zeros(size)
        for _ in range(m):
            out = np.empty(size)
            todo = np.arange(size)
            while todo.size:
                n = todo.size
                u = rng.uniform(0.0, np.pi, n)
                e = rng.standard_exponential(n)
                s = (np.sin(a * u) / np.sin(u) ** (1.0 / a)) * (
                    np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
                s *= km ** (1.0 / a)
                ok = rng.uniform(size=n) <= np.exp(-th * s)
                out[todo[ok]] = s[ok]
                todo = todo[~ok]
            total += out
        return total

    def params(self):
        return {"alpha": float(self.alpha), "theta": float(self.theta)}


def gh_logpdf(x, mu, gamma, sigma, lam, chi, psi):
    """
    Closed-form log density of the d-variate generalized hyperbolic law
    ``mu + gamma*W + sqrt(W) A Z`` with ``W ~ GIG(lam, chi, psi)``, ``A A' = sigma``.

    ``x`` has shape (n, d); returns shape (n,).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    d = mu.size
    chol = np.linalg.cholesky(sigma)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    dev = x - mu
    z = np.linalg.solve(chol, dev.T)
    zg = np.linalg.solve(chol, gamma)
    q = (z * z).sum(axis=0)
    cross = zg @ z
    c = zg @ zg
    omega = np.sqrt(chi * psi)
    arg = np.sqrt((chi + q) * (psi + c))
    log_const = (-lam * np.log(omega) + lam * np.log(psi) + (0.5 * d - lam) * np.log(psi + c)
                 - 0.5 * d * np.log(2.0 * np.pi) - 0.5 * logdet - log_bessel_k(lam, omega))
    return log_const + log_bessel_k(lam - 0.5 * d, arg) + cross - (0.5 * d - lam) * np.log(arg)
