"""
VaR and CoVaR in standardized-innovation space.

``CoVaR<=`` at levels ``(alpha, beta)`` is the value ``c`` with

    P(X_sys <= c, X_j <= q_alpha) = alpha * beta,

``q_alpha`` being the bank's own alpha-quantile.  For mixture laws the joint
probability is a rectangle probability of the pair law; for copula models it
is ``C(F_sys(c), alpha)``.  Roots are found with Brent's method, then mapped
to return space with the system series' location-scale forecast.
"""
from dataclasses import dataclass

import numpy as np
from scipy import optimize
from scipy.special import ndtri

from .bvn import bvn_cdf
from .copulas import copula_cdf
from .errors import BracketFailure, DomainError
from .mixing import Degenerate
from .mvmodels import rectangle_prob

__all__ = [
    "RiskQuery",
    "RiskSeries",
    "covar_leq_mixture",
    "covar_leq_copula",
    "covar_leq_gaussian",
    "covar_eq_gaussian",
    "to_return_space",
    "delta_covar",
]

BRACKETS = ((-15.0, 15.0), (-30.0, 30.0))
XTOL = 1e-12


def _check_levels(alpha, beta):
    if not (0 < alpha < 1 and 0 < beta < 1):
        raise DomainError(f"alpha and beta must lie in (0, 1), got {alpha}, {beta}")


def _solve(f, brackets=BRACKETS):
    for lo, hi in brackets:
        flo, fhi = f(lo), f(hi)
        if flo == 0.0:
            return lo
        if fhi == 0.0:
            return hi
        if flo < 0 < fhi:
            return optimize.brentq(f, lo, hi, xtol=XTOL, rtol=4 * np.finfo(float).eps,
                                   maxiter=200)
    raise BracketFailure(f"CoVaR objective keeps its sign on {brackets[-1]}")


def _is_product_gaussian(law):
    return (isinstance(law.mixing, Degenerate) and law.sigma[0, 1] == 0.0
            and not np.any(law.gamma))


def covar_leq_mixture(law, alpha, beta):
    """
    CoVaR<= of coordinate 0 (system) given coordinate 1 (bank) at or below
    its alpha-quantile, for a :class:`~covar_lab.mvmodels.BivariateLaw`.

    A Gaussian pair with zero correlation factorizes, and the root is then
    the system's beta-quantile in closed form.
    """
    _check_levels(alpha, beta)
    if _is_product_gaussian(law):
        return float(law.margin_x.quantile(beta))
    q = law.margin_y.quantile(alpha)
    target = alpha * beta
    return _solve(lambda c: rectangle_prob(law, c, q) - target)


def covar_leq_copula(fit, margin_sys, alpha, beta):
    """
    CoVaR<= under a copula model: solve ``C(u, alpha) = alpha*beta`` for
    ``u`` on (0, 1), then return ``F_sys^{-1}(u)``.

    ``fit`` is a :class:`~covar_lab.copulas.CopulaFit` whose first argument
    is the system's pseudo-observation.
    """
    _check_levels(alpha, beta)
    target = alpha * beta
    family = getattr(fit, "family", None)
    if family == "Independence":
        u = beta
    elif family == "Comonotone":
        u = target
    else:
        def f(u):
            return copula_cdf(fit, u, alpha) - target

        if not f(1.0) > 0:
            raise BracketFailure("copula objective does not change sign on (0, 1)")
        u = optimize.brentq(f, 0.0, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return float(margin_sys.quantile(u))


def covar_leq_gaussian(rho, alpha, beta):
    """Root of ``Phi_2(c, Phi^{-1}(alpha); rho) = alpha*beta`` for standard normal margins."""
    _check_levels(alpha, beta)
    qa = ndtri(alpha)
    return _solve(lambda c: float(bvn_cdf(c, qa, rho)) - alpha * beta)


def covar_eq_gaussian(rho, alpha, beta):
    """CoVaR= of a standard bivariate normal pair:
    ``rho*Phi^{-1}(alpha) + sqrt(1-rho^2)*Phi^{-1}(beta)``."""
    _check_levels(alpha, beta)
    if not abs(rho) <= 1:
        raise DomainError("correlation must lie in [-1, 1]")
    return float(rho * ndtri(alpha) + np.sqrt(1.0 - rho * rho) * ndtri(beta))


def to_return_space(c_standardized, fit, sigma_next, last_return):
    """Affine map ``c + a*y_t + sigma_next*c_standardized`` of the system series."""
    p = fit.params
    a = 0.0 if p.a is None else p.a
    return p.c + a * last_return + sigma_next * np.asarray(c_standardized, float)


def delta_covar(covar_stress, covar_median):
    """CoVaR at the stress level minus CoVaR at the median state."""
    return np.asarray(covar_stress, float) - np.asarray(covar_median, float)


@dataclass(frozen=True)
class RiskQuery:
    """
    One CoVaR question.  ``model`` is a pair law, or a ``(copula_fit,
    system_margin)`` tuple for the copula route.
    """

    alpha: float
    beta: float
    model: object

    def __post_init__(self):
        _check_levels(self.alpha, self.beta)

    def solve(self):
        if isinstance(self.model, tuple):
            fit, margin = self.model
            return covar_leq_copula(fit, margin, self.alpha, self.beta)
        return covar_leq_mixture(self.model, self.alpha, self.beta)

    def median(self):
        return RiskQuery(0.5, self.beta, self.model)


@dataclass(frozen=True)
class RiskSeries:
    """Per-day VaR and CoVaR forecasts of one bank under one model."""

    dates: tuple
    var_j: np.ndarray
    covar: np.ndarray
    covar_median: np.ndarray

    @property
    def delta_covar(self):
        return delta_covar(self.covar, self.covar_median)
