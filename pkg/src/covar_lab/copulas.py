"""
Bivariate copulas: Gaussian, Student t, BB1 and BB7.

BB1 and BB7 are Archimedean with inverse generators

    BB1:  psi(s) = (1 + s**(1/delta))**(-1/theta),            theta > 0, delta >= 1
    BB7:  psi(s) = 1 - (1 - (1 + s)**(-1/delta))**(1/theta),  theta >= 1, delta > 0

so ``C(u, v) = psi(phi(u) + phi(v))`` and the density is
``psi''(s) * phi'(u) * phi'(v)``.  All densities are evaluated in log space.
"""
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize, stats
from scipy.special import gammaln, ndtr, ndtri, stdtr, stdtrit

from .bvn import bvn_cdf
from .errors import DomainError, NonConvergent

__all__ = [
    "FAMILIES",
    "CopulaFit",
    "copula_cdf",
    "copula_logpdf",
    "copula_loglik",
    "h_function",
    "fit_copula",
    "select_by_aic",
    "sample_copula",
    "pseudo_observations",
]

FAMILIES = ("Normal", "StudentT", "BB1", "BB7")
N_PARAMS = {"Normal": 1, "StudentT": 2, "BB1": 2, "BB7": 2, "Independence": 0,
            "Comonotone": 0}
# limit families, used for checks and never selected
LIMITS = ("Independence", "Comonotone")
NU_MAX = 1000.0
_EPS = 1e-15


@dataclass(frozen=True)
class CopulaFit:
    """Fitted bivariate copula; ``params`` maps parameter names to values."""

    family: str
    params: dict
    loglik: float = float("nan")
    n_obs: int = 0
    candidates: tuple = field(default=(), repr=False, compare=False)

    @property
    def k(self):
        return N_PARAMS[self.family]

    @property
    def aic(self):
        return 2.0 * self.k - 2.0 * self.loglik

    def cdf(self, u, v):
        return copula_cdf(self, u, v)

    def to_dict(self):
        return {"family": self.family, **{k: float(v) for k, v in self.params.items()},
                "loglik": float(self.loglik), "aic": float(self.aic)}

    def to_json(self):
        return json.dumps(self.to_dict())


def _check_params(family, params):
    if family == "Normal":
        ok = abs(params["rho"]) < 1
    elif family == "StudentT":
        ok = abs(params["rho"]) < 1 and params["nu"] > 2
    elif family == "BB1":
        ok = params["theta"] > 0 and params["delta"] >= 1
    elif family == "BB7":
        ok = params["theta"] >= 1 and params["delta"] > 0
    elif family in LIMITS:
        ok = True
    else:
        raise DomainError(f"unknown copula family {family!r}")
    if not ok:
        raise DomainError(f"{family} parameters outside their domain: {params}")


def _unpack(fit_or_family, params=None):
    if isinstance(fit_or_family, CopulaFit):
        return fit_or_family.family, fit_or_family.params
    return fit_or_family, params or {}


# --- Archimedean pieces, everything in logs -------------------------------

def _bb1_log_phi(u, theta, delta):
    # phi(u) = (u**-theta - 1)**delta
    with np.errstate(divide="ignore"):
        return delta * np.log(np.expm1(-theta * np.log(u)))


def _bb1_log_dphi(u, theta, delta):
    # log|phi'(u)|
    lu = np.log(u)
    return (np.log(delta * theta) + (delta - 1.0) * np.log(np.expm1(-theta * lu))
            - (theta + 1.0) * lu)


def _bb1_cdf(u, v, theta, delta):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ls = np.logaddexp(_bb1_log_phi(u, theta, delta), _bb1_log_phi(v, theta, delta))
        return np.exp(-np.logaddexp(0.0, ls / delta) / theta)


def _bb1_logpdf(u, v, theta, delta):
    ls = np.logaddexp(_bb1_log_phi(u, theta, delta), _bb1_log_phi(v, theta, delta))
    lr = ls / delta
    l1r = np.logaddexp(0.0, lr)
    r = np.exp(lr)
    bracket = np.log((1.0 / theta + 1.0) * r + (delta - 1.0) * (1.0 + r))
    log_d2 = (-np.log(theta) - 2.0 * np.log(delta) + (-1.0 / theta - 2.0) * l1r
              + (1.0 / delta - 2.0) * ls + bracket)
    return log_d2 + _bb1_log_dphi(u, theta, delta) + _bb1_log_dphi(v, theta, delta)


def _bb1_log_dpsi(s_log, theta, delta):
    # log|psi'(s)|
    lr = s_log / delta
    return (-np.log(theta * delta) + (-1.0 / theta - 1.0) * np.logaddexp(0.0, lr)
            + (1.0 / delta - 1.0) * s_log)


def _bb7_log1m_pow(u, theta):
    # log(1 - (1-u)**theta)
    return np.log(-np.expm1(theta * np.log1p(-u)))


def _bb7_phi(u, theta, delta):
    return np.expm1(-delta * _bb7_log1m_pow(u, theta))


def _bb7_log_dphi(u, theta, delta):
    return (np.log(delta * theta) + (-delta - 1.0) * _bb7_log1m_pow(u, theta)
            + (theta - 1.0) * np.log1p(-u))


def _bb7_cdf(u, v, theta, delta):
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        s = _bb7_phi(u, theta, delta) + _bb7_phi(v, theta, delta)
        z = np.exp(-np.log1p(s) / delta)
        return -np.expm1(np.log1p(-z) / theta)


def _bb7_logpdf(u, v, theta, delta):
    s = _bb7_phi(u, theta, delta) + _bb7_phi(v, theta, delta)
    lz = -np.log1p(s) / delta
    z = np.exp(lz)
    log_d2 = (-np.log(theta) - 2.0 * np.log(delta) + (1.0 + 2.0 * delta) * lz
              + (1.0 / theta - 2.0) * np.log1p(-z) + np.log((1.0 + delta) - z * (delta + 1.0 / theta)))
    return log_d2 + _bb7_log_dphi(u, theta, delta) + _bb7_log_dphi(v, theta, delta)


def _bb7_log_dpsi(s, theta, delta):
    lz = -np.log1p(s) / delta
    return -np.log(theta * delta) + (1.0 / theta - 1.0) * np.log1p(-np.exp(lz)) + (1.0 + delta) * lz


# --- elliptical pieces -----------------------------------------------------

def _t_logpdf1(x, nu):
    return (gammaln(0.5 * (nu + 1.0)) - gammaln(0.5 * nu) - 0.5 * np.log(nu * np.pi)
            - 0.5 * (nu + 1.0) * np.log1p(x * x / nu))


def _t_logpdf2(x, y, rho, nu):
    q = (x * x - 2.0 * rho * x * y + y * y) / (nu * (1.0 - rho * rho))
    return (gammaln(0.5 * (nu + 2.0)) - gammaln(0.5 * nu) - np.log(nu * np.pi)
            - 0.5 * np.log1p(-rho * rho) - 0.5 * (nu + 2.0) * np.log1p(q))


def _bvt_cdf_scalar(a, b, rho, nu):
    # conditional form: X ~ t_nu, Y | X = x is t_{nu+1} with scale
    # sqrt((1-rho^2)(nu+x^2)/(nu+1)) around rho*x
    if a == -np.inf or b == -np.inf:
        return 0.0
    if a == np.inf:
        return stdtr(nu, b)
    if b == np.inf:
        return stdtr(nu, a)
    s2 = 1.0 - rho * rho

    def f(x):
        sc = np.sqrt(s2 * (nu + x * x) / (nu + 1.0))
        return np.exp(_t_logpdf1(x, nu)) * stdtr(nu + 1.0, (b - rho * x) / sc)

    val, _ = integrate.quad(f, -np.inf, a, epsabs=1e-14, epsrel=1e-12, limit=200)
    return min(max(val, 0.0), 1.0)


def _bvt_cdf(a, b, rho, nu):
    a, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
    out = np.array([_bvt_cdf_scalar(ai, bi, rho, nu) for ai, bi in zip(a.ravel(), b.ravel())])
    return out.reshape(a.shape)


# --- public API -----------------------------------------------------------

def copula_cdf(fit, u, v, params=None):
    """
    Copula value ``C(u, v)``.

    ``fit`` is a :class:`CopulaFit` or a family name (then ``params`` is
    required).  Gaussian values use the bivariate normal CDF, Student t
    values adaptive quadrature of the conditional representation, BB1/BB7
    the closed forms.
    """
    family, params = _unpack(fit, params)
    _check_params(family, params)
    u, v = np.broadcast_arrays(np.clip(np.asarray(u, float), 0.0, 1.0),
                               np.clip(np.asarray(v, float), 0.0, 1.0))
    out = np.empty(u.shape)
    edge = (u <= 0) | (v <= 0) | (u >= 1) | (v >= 1)
    out[edge] = np.where((u[edge] <= 0) | (v[edge] <= 0), 0.0, np.minimum(u[edge], v[edge]))
    inner = ~edge
    ui, vi = u[inner], v[inner]
    if family == "Independence":
        val = ui * vi
    elif family == "Comonotone":
        val = np.minimum(ui, vi)
    elif family == "Normal":
        val = bvn_cdf(ndtri(ui), ndtri(vi), params["rho"])
    elif family == "StudentT":
        nu = params["nu"]
        val = _bvt_cdf(stdtrit(nu, ui), stdtrit(nu, vi), params["rho"], nu)
    elif family == "BB1":
        val = _bb1_cdf(ui, vi, params["theta"], params["delta"])
    else:
        val = _bb7_cdf(ui, vi, params["theta"], params["delta"])
    out[inner] = np.clip(val, np.maximum(ui + vi - 1.0, 0.0), np.minimum(ui, vi))
    return out if out.ndim else float(out)


def copula_logpdf(family, params, u, v):
    """Log copula density at pseudo-observations strictly inside (0, 1)."""
    _check_params(family, params)
    if family == "Comonotone":
        raise DomainError("the comonotone copula has no density")
    u = np.clip(np.asarray(u, float), _EPS, 1.0 - _EPS)
    v = np.clip(np.asarray(v, float), _EPS, 1.0 - _EPS)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == "Independence":
            out = np.zeros(np.broadcast(u, v).shape)
        elif family == "Normal":
            r = params["rho"]
            x, y = ndtri(u), ndtri(v)
            out = (-0.5 * np.log1p(-r * r)
                   - (r * r * (x * x + y * y) - 2.0 * r * x * y) / (2.0 * (1.0 - r * r)))
        elif family == "StudentT":
            r, nu = params["rho"], params["nu"]
            x, y = stdtrit(nu, u), stdtrit(nu, v)
            out = _t_logpdf2(x, y, r, nu) - _t_logpdf1(x, nu) - _t_logpdf1(y, nu)
        elif family == "BB1":
            out = _bb1_logpdf(u, v, params["theta"], params["delta"])
        else:
            out = _bb7_logpdf(u, v, params["theta"], params["delta"])
    return out


def copula_loglik(family, params, pseudo_obs):
    """Sum of log copula densities over an (n, 2) array of pseudo-observations."""
    z = np.asarray(pseudo_obs, float)
    if np.any((z <= 0) | (z >= 1)):
        raise DomainError("pseudo-observations must lie strictly inside (0, 1)")
    ll = copula_logpdf(family, params, z[:, 0], z[:, 1])
    return float(np.sum(ll)) if np.all(np.isfinite(ll)) else -np.inf


def h_function(family, params, v, u):
    """Conditional distribution ``P(V <= v | U = u) = dC(u, v)/du``."""
    _check_params(family, params)
    u = np.clip(np.asarray(u, float), _EPS, 1.0 - _EPS)
    v = np.clip(np.asarray(v, float), _EPS, 1.0 - _EPS)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if family == "Independence":
            return np.broadcast_to(v, np.broadcast(u, v).shape).copy()
        if family == "Normal":
            r = params["rho"]
            return ndtr((ndtri(v) - r * ndtri(u)) / np.sqrt(1.0 - r * r))
        if family == "StudentT":
            r, nu = params["rho"], params["nu"]
            x, y = stdtrit(nu, u), stdtrit(nu, v)
            sc = np.sqrt((nu + x * x) * (1.0 - r * r) / (nu + 1.0))
            return stdtr(nu + 1.0, (y - r * x) / sc)
        th, de = params["theta"], params["delta"]
        if family == "BB1":
            ls = np.logaddexp(_bb1_log_phi(u, th, de), _bb1_log_phi(v, th, de))
            out = np.exp(_bb1_log_dpsi(ls, th, de) + _bb1_log_dphi(u, th, de))
        else:
            s = _bb7_phi(u, th, de) + _bb7_phi(v, th, de)
            out = np.exp(_bb7_log_dpsi(s, th, de) + _bb7_log_dphi(u, th, de))
    return np.clip(out, 0.0, 1.0)


def sample_copula(family, params, size, rng):
    """Draw ``size`` pairs; Archimedean families by h-function inversion."""
    _check_params(family, params)
    if family == "Normal":
        r = params["rho"]
        z = rng.standard_normal((size, 2))
        z[:, 1] = r * z[:, 0] + np.sqrt(1.0 - r * r) * z[:, 1]
        return ndtr(z)
    if family == "StudentT":
        r, nu = params["rho"], params["nu"]
        z = rng.standard_normal((size, 2))
        z[:, 1] = r * z[:, 0] + np.sqrt(1.0 - r * r) * z[:, 1]
        w = np.sqrt(nu / rng.chisquare(nu, size))
        return stdtr(nu, z * w[:, None])
    u = rng.uniform(size=size)
    p = rng.uniform(size=size)
    lo, hi = np.zeros(size), np.ones(size)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = h_function(family, params, mid, u) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return np.column_stack([u, 0.5 * (lo + hi)])


def pseudo_observations(x, margins=None):
    """
    Map an (n, 2) sample to (0, 1)^2, either through fitted marginal CDFs
    (``margins``: two objects with a ``cdf`` method) or by ranks / (n + 1).
    """
    x = np.asarray(x, float)
    if margins is None:
        return stats.rankdata(x, axis=0) / (x.shape[0] + 1.0)
    u = np.column_stack([m.cdf(x[:, k]) for k, m in enumerate(margins)])
    return np.clip(u, 1e-12, 1.0 - 1e-12)


# --- estimation ------------------------------------------------------------

def _to_params(family, p):
    if family == "Normal":
        return {"rho": float(np.tanh(p[0]))}
    if family == "StudentT":
        return {"rho": float(np.tanh(p[0])), "nu": float(min(2.0 + np.exp(p[1]), NU_MAX))}
    if family == "BB1":
        return {"theta": float(np.exp(p[0])), "delta": float(1.0 + np.exp(p[1]))}
    return {"theta": float(1.0 + np.exp(p[0])), "delta": float(np.exp(p[1]))}


def _starts(family, tau):
    rho = np.clip(np.sin(0.5 * np.pi * tau), -0.95, 0.95)
    if family == "Normal":
        return [[np.arctanh(rho)]]
    if family == "StudentT":
        return [[np.arctanh(rho), np.log(nu - 2.0)] for nu in (4.0, 10.0, 40.0)]
    t = max(tau, 0.02)
    if family == "BB1":
        out = []
        for th in (0.2, 1.0):
            de = max(2.0 / ((1.0 - t) * (th + 2.0)), 1.0 + 1e-3)
            out.append([np.log(th), np.log(de - 1.0)])
        return out
    return [[np.log(0.3), np.log(0.3)], [np.log(1.0), np.log(1.0)], [np.log(0.1), np.log(0.1)]]


def fit_copula(pseudo_obs, family):
    """
    Maximum likelihood fit of one family on unconstrained parameters
    (tanh for rho, exp+2 for nu, shifted exp for theta and delta).

    Raises
    ------
    NonConvergent
        If no start reaches a finite likelihood.
    """
    z = np.asarray(pseudo_obs, float)
    if z.ndim != 2 or z.shape[1] != 2 or z.shape[0] < 100:
        raise DomainError("fit_copula needs an (n, 2) array with n >= 100")
    if family not in FAMILIES:
        raise DomainError(f"unknown copula family {family!r}")
    tau = stats.kendalltau(z[:, 0], z[:, 1])[0]
    if family in ("BB1", "BB7") and tau <= 0:
        raise NonConvergent(f"{family} needs positive dependence (tau = {tau:.3f})")

    def nll(p):
        try:
            ll = copula_loglik(family, _to_params(family, p), z)
        except DomainError:
            return 1e300
        return -ll if np.isfinite(ll) else 1e300

    # screen the starts, polish the best with a quasi-Newton run and fall
    # back to the simplex method if that stalls
    p0 = min(_starts(family, tau), key=nll)
    best = optimize.minimize(nll, p0, method="L-BFGS-B")
    if not best.success or best.fun >= 1e299:
        alt = optimize.minimize(nll, p0, method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 2000})
        if alt.fun < best.fun:
            best = alt
    if best is None or best.fun >= 1e299:
        raise NonConvergent(f"{family} copula fit failed")
    return CopulaFit(family, _to_params(family, best.x), loglik=-float(best.fun), n_obs=len(z))


def select_by_aic(pseudo_obs, families=FAMILIES):
    """
    Fit every family and return the minimum-AIC fit (ties resolved in the
    order Normal, StudentT, BB1, BB7).  Families that fail are skipped; the
    successful fits are attached as ``candidates``.
    """
    fits = []
    for fam in families:
        try:
            fits.append(fit_copula(pseudo_obs, fam))
        except NonConvergent:
            continue
    if not fits:
        raise NonConvergent("no copula family could be fitted")
    best = min(fits, key=lambda f: (f.aic, FAMILIES.index(f.family)))
    return CopulaFit(best.family, best.params, best.loglik, best.n_obs, candidates=tuple(fits))
