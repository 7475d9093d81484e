"""
AR(1)-GJR-GARCH(1,1) estimation, filtering and one-step forecasts.

    y_t       = c + a*y_{t-1} + u_t,           u_t = sigma_t * eps_t
    sigma_t^2 = alpha0 + alpha1*(|u_{t-1}| - gamma*u_{t-1})^2 + beta1*sigma_{t-1}^2

Given the residuals the variance recursion is a first-order linear filter,
so it is evaluated with :func:`scipy.signal.lfilter`.  Estimation works on
the series divided by its sample standard deviation; the parameters are
mapped back afterwards.
"""
import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import optimize, signal
from scipy.special import expit, ndtri

from .errors import DegenerateSeries, DomainError, InsufficientHistory, NonConvergent
from .unidist import Normal, SkewT

__all__ = [
    "GjrParams",
    "GarchFit",
    "fit_gjr",
    "filter",
    "forecast_sigma",
    "var_forecast",
    "simulate_gjr",
    "gjr_loglik",
]

MIN_OBS = 250
T_CRIT = 1.96
_PERSIST_MAX = 1.0 - 1e-6
_STARTS = ((0.95, 0.08, 0.1), (0.90, 0.10, 0.3), (0.98, 0.05, 0.0),
           (0.80, 0.20, 0.5), (0.50, 0.30, 0.0))
_TIE_TOL = 1e-3
_ROUGH_ITER = 10
_POLISH = 2


@dataclass(frozen=True)
class GjrParams:
    """AR-GJR-GARCH parameters; ``a`` is None when the AR term is dropped."""

    c: float
    a: float
    alpha0: float
    alpha1: float
    gamma: float
    beta1: float

    def __post_init__(self):
        if not (self.alpha0 > 0 and self.alpha1 >= 0 and self.beta1 >= 0
                and abs(self.gamma) <= 1):
            raise DomainError(f"GJR parameters outside their domain: {self}")

    @property
    def persistence(self):
        return self.alpha1 * (1.0 + self.gamma ** 2) + self.beta1

    @property
    def has_ar(self):
        return self.a is not None

    def vector(self):
        return np.array([self.c, self.a or 0.0, self.alpha0, self.alpha1, self.gamma, self.beta1])


@dataclass(frozen=True)
class GarchFit:
    """
    Result of :func:`fit_gjr`.

    ``sigma_path`` and ``residuals`` cover the observations that have a
    full conditional mean, i.e. all but the first when the AR term is kept.
    ``dist`` is the innovation law used in the likelihood (``Normal`` for
    QMLE, a fitted ``SkewT`` otherwise).
    """

    params: GjrParams
    sigma_path: np.ndarray
    residuals: np.ndarray
    loglik: float
    ar_dropped: bool
    stderrs: dict
    dist: object = field(default_factory=Normal)
    last_return: float = 0.0

    def forecast(self):
        """One-step-ahead volatility from the end of the filtered sample."""
        return forecast_sigma(self, self.last_return, self.sigma_path[-1], self.residuals[-1])

    def refilter(self, series):
        """Same parameters run over a new return series (no re-estimation)."""
        y = np.asarray(series, dtype=float)
        sig, res = filter(self.params, y)
        return replace(self, sigma_path=sig, residuals=res, last_return=float(y[-1]))

    def to_dict(self):
        p = asdict(self.params)
        return {**p, "loglik": float(self.loglik), "ar_dropped": bool(self.ar_dropped),
                "dist": self.dist.to_dict()}

    def to_json(self):
        return json.dumps(self.to_dict())


def _variance_path(u, alpha0, alpha1, gamma, beta1, s0):
    h = (np.abs(u) - gamma * u) ** 2
    x = alpha0 + alpha1 * h[:-1]
    s2 = np.empty_like(u)
    s2[0] = s0
    if u.size > 1:
        s2[1:] = signal.lfilter([1.0], [1.0, -beta1], x, zi=[beta1 * s0])[0]
    return s2


def _mean_residuals(y, c, a):
    if a is None:
        return y - c
    return y[1:] - a * y[:-1] - c


def filter(params, series):
    """
    Run the variance recursion over a return series.

    The recursion starts at the sample variance of the series (floored at
    ``alpha0``).  Returns ``(sigma_path, residuals)`` where residuals are
    the standardized innovations.
    """
    y = np.asarray(series, dtype=float)
    u = _mean_residuals(y, params.c, params.a)
    s0 = max(np.var(y), params.alpha0)
    s2 = _variance_path(u, params.alpha0, params.alpha1, params.gamma, params.beta1, s0)
    sig = np.sqrt(s2)
    return sig, u / sig


def _obs_loglik(theta, y, ar, dist_kind, s0):
    """Per-observation log-likelihood on natural parameters."""
    c, a, alpha0, alpha1, gamma, beta1 = theta[:6]
    u = _mean_residuals(y, c, a if ar else None)
    s2 = _variance_path(u, alpha0, alpha1, gamma, beta1, s0)
    if np.any(~(s2 > 0)):
        return np.full(u.shape, -np.inf)
    z = u / np.sqrt(s2)
    if dist_kind == "normal":
        return -0.5 * (np.log(2.0 * np.pi) + np.log(s2) + z * z)
    nu, xi = theta[6], theta[7]
    if not (nu > 2 and xi > 0):
        return np.full(u.shape, -np.inf)
    return SkewT(nu, xi).logpdf(z) - 0.5 * np.log(s2)


def _loglik_grad(theta, y, ar, dist_kind, s0):
    """
    Total log-likelihood and its gradient in the natural parameters
    ``(c, a, alpha0, alpha1, gamma, beta1[, nu, xi])``.  The variance
    derivatives follow their own first-order recursions, run with lfilter.
    """
    c, a, alpha0, alpha1, gamma, beta1 = theta[:6]
    u = _mean_residuals(y, c, a if ar else None)
    s2 = _variance_path(u, alpha0, alpha1, gamma, beta1, s0)
    if np.any(~(s2 > 0)):
        return -np.inf, np.zeros(theta.size)
    sd = np.sqrt(s2)
    z = u / sd
    if dist_kind == "normal":
        ll = -0.5 * (np.log(2.0 * np.pi) + np.log(s2) + z * z)
        dl_du = -z / sd
        dl_ds2 = -0.5 * (1.0 - z * z) / s2
    else:
        nu, xi = theta[6], theta[7]
        if not (nu > 2 and xi > 0):
            return -np.inf, np.zeros(theta.size)
        dist = SkewT(nu, xi)
        ll = dist.logpdf(z) - 0.5 * np.log(s2)
        fz = dist.dlogpdf(z)
        dl_du = fz / sd
        dl_ds2 = -0.5 * (fz * z + 1.0) / s2
    total = float(np.sum(ll))
    if not np.isfinite(total):
        return -np.inf, np.zeros(theta.size)
    # du/d(c, a)
    y_lag = y[:-1] if ar else np.zeros_like(u)
    du = [-np.ones_like(u), -y_lag]
    m = np.abs(u) - gamma * u
    dh_du = 2.0 * m * (np.sign(u) - gamma)
    dh_dg = -2.0 * m * u
    h = m * m
    drivers = [alpha1 * dh_du * du[0], alpha1 * dh_du * du[1], np.ones_like(u), h,
               alpha1 * dh_dg, s2]
    ds2 = np.zeros((6, u.size))
    if u.size > 1:
        ds2[:, 1:] = signal.lfilter([1.0], [1.0, -beta1], np.vstack(drivers)[:, :-1], axis=1)
    grad = np.zeros(theta.size)
    grad[:6] = ds2 @ dl_ds2
    grad[0] += dl_du @ du[0]
    grad[1] += dl_du @ du[1]
    if not ar:
        grad[1] = 0.0
    if dist_kind != "normal":
        for k, step in ((6, 1e-6 * (nu - 2.0)), (7, 1e-6 * xi)):
            hi, lo = theta.copy(), theta.copy()
            hi[k] += step
            lo[k] -= step
            f_hi = np.sum(SkewT(hi[6], hi[7]).logpdf(z))
            f_lo = np.sum(SkewT(lo[6], lo[7]).logpdf(z))
            grad[k] = (f_hi - f_lo) / (2.0 * step)
    return total, grad


def _objective(y, ar, kind, s0, fixed_gamma=None):
    """
    Negative log-likelihood with gradient in unconstrained coordinates; with
    ``fixed_gamma`` the leverage coordinate is held at that value.
    """
    k = 2 if ar else 1

    def full(p):
        return p if fixed_gamma is None else np.insert(p, k + 3, fixed_gamma)

    def fun(p):
        q = full(p)
        theta = _natural(q, ar, kind)
        ll, g_nat = _loglik_grad(theta, y, ar, kind, s0)
        if not np.isfinite(ll):
            return 1e100, np.zeros(p.size)
        g = g_nat @ _natural_jac(q, ar, kind)
        if fixed_gamma is not None:
            g = np.delete(g, k + 3)
        return -ll, -g

    return fun


def gjr_loglik(params, series, dist=None):
    """Log-likelihood of a return series under given parameters."""
    y = np.asarray(series, dtype=float)
    s0 = max(np.var(y), params.alpha0)
    theta = list(params.vector())
    kind = "normal"
    if isinstance(dist, SkewT):
        theta += [dist.nu, dist.xi]
        kind = "skewt"
    return float(np.sum(_obs_loglik(np.array(theta), y, params.has_ar, kind, s0)))


def _natural(p, ar, kind):
    c, a = p[0], (p[1] if ar else 0.0)
    k = 2 if ar else 1
    alpha0 = np.exp(p[k])
    persist = _PERSIST_MAX * expit(p[k + 1])
    share = expit(p[k + 2])
    gamma = np.tanh(p[k + 3])
    alpha1 = share * persist / (1.0 + gamma ** 2)
    beta1 = (1.0 - share) * persist
    out = [c, a, alpha0, alpha1, gamma, beta1]
    if kind == "skewt":
        out += [2.0 + np.exp(p[k + 4]), np.exp(p[k + 5])]
    return np.array(out)


def _natural_jac(p, ar, kind):
    """Jacobian of :func:`_natural` (rows natural, columns unconstrained)."""
    k = 2 if ar else 1
    th = _natural(p, ar, kind)
    alpha0, alpha1, gamma, beta1 = th[2:6]
    e1 = expit(p[k + 1])
    persist = _PERSIST_MAX * e1
    share = expit(p[k + 2])
    d_persist = persist * (1.0 - e1)
    d_share = share * (1.0 - share)
    d_gamma = 1.0 - gamma ** 2
    den = 1.0 + gamma ** 2
    J = np.zeros((th.size, p.size))
    J[0, 0] = 1.0
    if ar:
        J[1, 1] = 1.0
    J[2, k] = alpha0
    J[3, k + 1] = share * d_persist / den
    J[3, k + 2] = d_share * persist / den
    J[3, k + 3] = -alpha1 * 2.0 * gamma / den * d_gamma
    J[4, k + 3] = d_gamma
    J[5, k + 1] = (1.0 - share) * d_persist
    J[5, k + 2] = -d_share * persist
    if kind == "skewt":
        J[6, k + 4] = th[6] - 2.0
        J[7, k + 5] = th[7]
    return J


def _start_vector(y, ar, kind, persist, share, gamma):
    p = [y.mean()]
    if ar:
        p.append(0.0)
    p += [np.log(np.var(y) * (1.0 - persist)), np.log(persist / (_PERSIST_MAX - persist)),
          np.log(share / (1.0 - share)), np.arctanh(gamma)]
    if kind == "skewt":
        p += [np.log(6.0), 0.0]
    return np.array(p)


def _robust_se(theta, y, ar, kind, s0):
    """Sandwich standard errors from numerical scores and Hessian."""
    free = [0, 1, 2, 3, 4, 5] if ar else [0, 2, 3, 4, 5]
    if kind == "skewt":
        free += [6, 7]
    k = len(free)
    h = 1e-5 * np.maximum(np.abs(theta[free]), 1e-3)

    def lt(vec):
        th = theta.copy()
        th[free] = vec
        return _obs_loglik(th, y, ar, kind, s0)

    x0 = theta[free]
    scores = np.empty((k, lt(x0).size))
    for i in range(k):
        e = np.zeros(k)
        e[i] = h[i]
        scores[i] = (lt(x0 + e) - lt(x0 - e)) / (2.0 * h[i])
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei, ej = np.zeros(k), np.zeros(k)
            ei[i], ej[j] = h[i], h[j]
            val = (lt(x0 + ei + ej).sum() - lt(x0 + ei - ej).sum()
                   - lt(x0 - ei + ej).sum() + lt(x0 - ei - ej).sum()) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = val
    out = np.full(theta.size, np.nan)
    try:
        hinv = np.linalg.inv(hess)
        cov = hinv @ (scores @ scores.T) @ hinv
        out[free] = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        pass
    return out


def _unconstrained(theta, ar, kind):
    """Inverse of :func:`_natural`."""
    c, a, alpha0, alpha1, gamma, beta1 = theta[:6]
    persist = alpha1 * (1.0 + gamma ** 2) + beta1
    share = alpha1 * (1.0 + gamma ** 2) / persist
    q = np.clip(persist / _PERSIST_MAX, 1e-10, 1.0 - 1e-10)
    share = np.clip(share, 1e-10, 1.0 - 1e-10)
    p = [c] + ([a] if ar else []) + [np.log(alpha0), np.log(q / (1.0 - q)),
                                     np.log(share / (1.0 - share)),
                                     np.arctanh(np.clip(gamma, -0.999999, 0.999999))]
    if kind == "skewt":
        p += [np.log(theta[6] - 2.0), np.log(theta[7])]
    return np.clip(np.array(p, dtype=float), -30.0, 30.0)


def _optimize(y, ar, kind, s0, warm=None):
    """
    Multistart L-BFGS-B.  ``warm`` (natural parameters) replaces the start
    grid with a single polished start, used for the nested no-AR refit.
    """
    nll = _objective(y, ar, kind, s0)
    bounds = [(-30.0, 30.0)] * _start_vector(y, ar, kind, 0.9, 0.1, 0.0).size
    rough = []
    if warm is not None:
        rough.append((0.0, _unconstrained(warm, ar, kind)))
    # short runs from every start, then polish the most promising ones
    for persist, share, gamma in (_STARTS if warm is None else ()):
        p0 = _start_vector(y, ar, kind, persist, share, gamma)
        res = optimize.minimize(nll, p0, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-9, "maxiter": _ROUGH_ITER})
        if np.isfinite(res.fun) and res.fun < 1e99:
            rough.append((res.fun, res.x))
    rough.sort(key=lambda r: r[0])
    results = []
    for _, x0 in rough[:_POLISH]:
        res = optimize.minimize(nll, x0, jac=True, method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-12, "gtol": 1e-7, "maxiter": 2000})
        if np.isfinite(res.fun) and res.fun < 1e99:
            results.append((res.fun, _natural(res.x, ar, kind)))
    if not results:
        raise NonConvergent("GJR likelihood optimization failed from every start")
    best = min(r[0] for r in results)
    # near-ties: prefer the least persistent solution
    tied = [r for r in results if r[0] <= best + _TIE_TOL]
    fun, theta = min(tied, key=lambda r: (r[1][3] * (1.0 + r[1][4] ** 2) + r[1][5], r[0]))
    return -fun, theta


def fit_gjr(series, dist="normal", test_ar=True, fix_gamma=None):
    """
    Fit AR(1)-GJR-GARCH(1,1) by (quasi) maximum likelihood.

    Parameters
    ----------
    series : array_like
        Returns, at least 250 observations.
    dist : {"normal", "skewt"}
        Innovation likelihood.  ``"normal"`` is QMLE; ``"skewt"`` estimates
        the standardized skew-t shape jointly.
    test_ar : bool
        Drop the AR term and refit when its robust t-ratio is below 1.96.
    fix_gamma : float, optional
        Hold the leverage coefficient fixed (``0`` gives symmetric GARCH).

    Returns
    -------
    GarchFit
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1 or y.size < MIN_OBS:
        raise InsufficientHistory(f"need at least {MIN_OBS} returns, got {y.size}")
    if not np.all(np.isfinite(y)):
        raise DomainError("series contains non-finite values")
    scale = np.std(y)
    if not scale > 0:
        raise DegenerateSeries("series has zero variance")
    if dist not in ("normal", "skewt"):
        raise DomainError(f"unknown innovation likelihood {dist!r}")
    z = y / scale
    s0 = np.var(z)

    def run(ar, warm=None):
        if fix_gamma is None:
            ll, theta = _optimize(z, ar, dist, s0, warm)
        else:
            ll, theta = _optimize_fixed_gamma(z, ar, dist, s0, fix_gamma)
        se = _robust_se(theta, z, ar, dist, s0)
        if fix_gamma is not None:
            se[4] = np.nan
        return ll, theta, se

    ll, theta, se = run(True)
    ar_dropped = False
    if test_ar:
        t_ratio = abs(theta[1]) / se[1] if se[1] > 0 else np.inf
        if np.isfinite(se[1]) and t_ratio < T_CRIT:
            ll, theta, se = run(False, warm=theta)
            ar_dropped = True
    # back to return units
    mult = np.array([scale, 1.0, scale ** 2, 1.0, 1.0, 1.0])
    nat = theta[:6] * mult
    se6 = se[:6] * mult
    params = GjrParams(c=nat[0], a=None if ar_dropped else nat[1], alpha0=nat[2],
                       alpha1=nat[3], gamma=nat[4], beta1=nat[5])
    names = ("c", "a", "alpha0", "alpha1", "gamma", "beta1")
    stderrs = {k: float(v) for k, v in zip(names, se6) if not (k == "a" and ar_dropped)}
    innov = Normal()
    if dist == "skewt":
        innov = SkewT(theta[6], theta[7])
        stderrs.update(nu=float(se[6]), xi=float(se[7]))
    sig, res = filter(params, y)
    loglik = ll - y[(0 if ar_dropped else 1):].size * np.log(scale)
    return GarchFit(params, sig, res, float(loglik), ar_dropped, stderrs, innov,
                    last_return=float(y[-1]))


def _optimize_fixed_gamma(y, ar, kind, s0, gamma):
    g = np.arctanh(np.clip(gamma, -0.999999, 0.999999))
    k = 2 if ar else 1

    def expand(p):
        return np.concatenate([p[:k + 3], [g], p[k + 3:]])

    nll = _objective(y, ar, kind, s0, fixed_gamma=g)

    results = []
    for persist, share, _ in _STARTS:
        p0 = np.delete(_start_vector(y, ar, kind, persist, share, 0.0), k + 3)
        res = optimize.minimize(nll, p0, jac=True, method="L-BFGS-B",
                                bounds=[(-30.0, 30.0)] * p0.size, options={"ftol": 1e-12, "gtol": 1e-7, "maxiter": 2000})
        if np.isfinite(res.fun) and res.fun < 1e99:
            results.append((res.fun, _natural(expand(res.x), ar, kind)))
    if not results:
        raise NonConvergent("GARCH likelihood optimization failed from every start")
    fun, theta = min(results, key=lambda r: r[0])
    return -fun, theta


def forecast_sigma(fit, last_return, last_sigma, last_resid):
    """
    One step of the variance recursion: returns ``sigma_{t+1}`` from the
    last volatility and standardized residual.  ``last_return`` is accepted
    for interface symmetry with :func:`var_forecast`.
    """
    p = fit.params if isinstance(fit, GarchFit) else fit
    u = last_sigma * last_resid
    s2 = p.alpha0 + p.alpha1 * (abs(u) - p.gamma * u) ** 2 + p.beta1 * last_sigma ** 2
    return float(np.sqrt(s2))


def var_forecast(fit, sigma_next, last_return, eps_quantile):
    """VaR of the next return: ``c + a*y_t + sigma_next*q``."""
    p = fit.params if isinstance(fit, GarchFit) else fit
    a = 0.0 if p.a is None else p.a
    return p.c + a * last_return + sigma_next * np.asarray(eps_quantile, float)


def simulate_gjr(params, n, rng, dist=None, burn=500):
    """
    Simulate ``n`` returns and the innovations that generated them.

    Returns ``(y, eps, sigma)``; ``eps[t]`` and ``sigma[t]`` belong to ``y[t]``.
    """
    a = 0.0 if params.a is None else params.a
    total = n + burn
    if dist is None:
        eps = rng.standard_normal(total)
    else:
        eps = dist.quantile(np.clip(rng.uniform(size=total), 1e-16, 1 - 1e-16))
    y = np.empty(total)
    sig = np.empty(total)
    s2 = params.alpha0 / max(1.0 - params.persistence, 1e-6)
    y_prev, u_prev = params.c / (1.0 - a), 0.0
    for t in range(total):
        if t > 0:
            s2 = (params.alpha0 + params.alpha1 * (abs(u_prev) - params.gamma * u_prev) ** 2
                  + params.beta1 * s2)
        sig[t] = np.sqrt(s2)
        u_prev = sig[t] * eps[t]
        y[t] = params.c + a * y_prev + u_prev
        y_prev = y[t]
    return y[burn:], eps[burn:], sig[burn:]
