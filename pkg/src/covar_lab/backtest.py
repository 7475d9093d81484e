"""
Forecast evaluation: hit sequences, coverage and independence likelihood
ratios, the dynamic quantile test, magnitude losses and the KS test.

Forecasts follow the modelled sign convention (losses are negative), so a
violation is a realized return strictly below its forecast.
"""
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import kolmogorov, xlogy

from .errors import DomainError, EmptySubset, LengthMismatch

__all__ = [
    "HitSequence",
    "TestResult",
    "hit_sequence",
    "conditional_subset",
    "lr_uc",
    "lr_ind",
    "lr_cc",
    "dq_test",
    "loss_lm",
    "loss_la",
    "ks_statistic",
    "ks_pvalue",
    "evaluate_pair",
    "LOW_POWER_DAYS",
]

LOW_POWER_DAYS = 20


@dataclass(frozen=True)
class HitSequence:
    bits: np.ndarray
    nominal_p: float

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.size < 1 or not np.all((b == 0) | (b == 1)):
            raise DomainError("a hit sequence needs at least one 0/1 entry")
        if not 0 < self.nominal_p < 1:
            raise DomainError("nominal probability must lie in (0, 1)")

    @property
    def n(self):
        return int(np.asarray(self.bits).size)

    @property
    def x(self):
        return int(np.sum(self.bits))

    @property
    def rate(self):
        return self.x / self.n


@dataclass(frozen=True)
class TestResult:
    """Likelihood-ratio style result; ``flag`` marks degenerate cases."""

    statistic: float
    df: int
    p_value: float
    flag: str = ""


def _result(stat, df, flag=""):
    stat = max(float(stat), 0.0) + 0.0
    return TestResult(stat, int(df), float(np.clip(stats.chi2.sf(stat, df), 0.0, 1.0)), flag)


def _aligned(*arrays):
    arrs = [np.asarray(a, dtype=float) for a in arrays]
    if len({a.shape for a in arrs}) != 1:
        raise LengthMismatch(f"series lengths differ: {[a.size for a in arrs]}")
    return arrs


def hit_sequence(realized, forecasts, nominal_p):
    """Bits equal to one where the realized value lies strictly below the forecast."""
    y, f = _aligned(realized, forecasts)
    return HitSequence((y < f).astype(np.int8), nominal_p)


def conditional_subset(bank_hits, realized_sys, covar_forecasts, beta):
    """
    Second-stage hits: keep the bank's violation days and compare the
    system's realized return with the CoVaR forecast on those days.

    Raises
    ------
    EmptySubset
        The bank never violated its VaR.
    """
    y, f = _aligned(realized_sys, covar_forecasts)
    b = np.asarray(bank_hits.bits).astype(bool)
    if b.size != y.size:
        raise LengthMismatch("bank hits and system series differ in length")
    if not b.any():
        raise EmptySubset("no distress days for the conditional backtest")
    if b.sum() < LOW_POWER_DAYS:
        warnings.warn(f"conditional backtest on only {int(b.sum())} days has low power",
                      stacklevel=2)
    return hit_sequence(y[b], f[b], beta)


def _bernoulli_ll(x, n, p):
    return xlogy(n - x, 1.0 - p) + xlogy(x, p)


def lr_uc(h):
    """Unconditional coverage (proportion of failures) test, one degree of freedom."""
    n, x, p = h.n, h.x, h.nominal_p
    stat = -2.0 * (_bernoulli_ll(x, n, p) - _bernoulli_ll(x, n, x / n))
    return _result(stat, 1)


def _transitions(bits):
    b = np.asarray(bits).astype(int)
    prev, cur = b[:-1], b[1:]
    n00 = int(np.sum((prev == 0) & (cur == 0)))
    n01 = int(np.sum((prev == 0) & (cur == 1)))
    n10 = int(np.sum((prev == 1) & (cur == 0)))
    n11 = int(np.sum((prev == 1) & (cur == 1)))
    return n00, n01, n10, n11


def lr_ind(h):
    """
    Independence test against a first-order Markov alternative.  A row of
    the transition table with no observations contributes nothing and sets
    ``flag = "degenerate_transitions"``.
    """
    if h.n < 2:
        raise DomainError("independence test needs at least two observations")
    n00, n01, n10, n11 = _transitions(h.bits)
    pi = (n01 + n11) / (n00 + n01 + n10 + n11)
    flag = ""
    alt = 0.0
    if n00 + n01 > 0:
        alt += _bernoulli_ll(n01, n00 + n01, n01 / (n00 + n01))
    else:
        flag = "degenerate_transitions"
    if n10 + n11 > 0:
        alt += _bernoulli_ll(n11, n10 + n11, n11 / (n10 + n11))
    else:
        flag = "degenerate_transitions"
    null = _bernoulli_ll(n01 + n11, n00 + n01 + n10 + n11, pi)
    return _result(-2.0 * (null - alt), 1, flag)


def lr_cc(h):
    """Conditional coverage: ``lr_uc + lr_ind`` with two degrees of freedom."""
    uc, ind = lr_uc(h), lr_ind(h)
    return _result(uc.statistic + ind.statistic, 2, ind.flag)


def dq_test(h, forecasts, lags=4):
    """
    Dynamic quantile test.

    Regress ``hit_t - p`` on a constant, ``lags`` lagged hits and the
    forecast; the statistic is ``g' X'X g / (p(1-p))`` with ``g`` the OLS
    coefficients.  Columns that add no rank are dropped (``flag =
    "singular_regressors"``) and the degrees of freedom shrink accordingly.
    """
    bits = np.asarray(h.bits, dtype=float)
    f = np.asarray(forecasts, dtype=float)
    if f.size != bits.size:
        raise LengthMismatch("forecasts and hits differ in length")
    n = bits.size
    if n <= lags + 2:
        raise DomainError(f"DQ test needs more than {lags + 2} observations")
    p = h.nominal_p
    y = bits[lags:] - p
    cols = [np.ones(n - lags)] + [bits[lags - k:n - k] for k in range(1, lags + 1)] + [f[lags:]]
    kept = []
    for col in cols:
        trial = np.column_stack(kept + [col])
        if np.linalg.matrix_rank(trial) == trial.shape[1]:
            kept.append(col)
    X = np.column_stack(kept)
    flag = "" if len(kept) == len(cols) else "singular_regressors"
    g, *_ = np.linalg.lstsq(X, y, rcond=None)
    fitted = X @ g
    stat = fitted @ fitted / (p * (1.0 - p))
    return _result(stat, X.shape[1], flag)


def loss_lm(realized, forecasts):
    """Mean of ``1 + (y - VaR)^2`` over violation days, zero elsewhere."""
    y, f = _aligned(realized, forecasts)
    hit = y < f
    return float(np.mean(np.where(hit, 1.0 + (y - f) ** 2, 0.0)))


def loss_la(realized, forecasts, nominal_p):
    """
    Asymmetric loss: ``P*(1 + |y - VaR|)`` on violations and ``|y - VaR|``
    otherwise, averaged over days; ``P = exp((a_hat - a)/a)`` when the
    empirical coverage ``a_hat`` exceeds ``a``, else one.
    """
    y, f = _aligned(realized, forecasts)
    hit = y < f
    a_hat = hit.mean()
    pen = np.exp((a_hat - nominal_p) / nominal_p) if a_hat > nominal_p else 1.0
    dist = np.abs(y - f)
    return float(np.mean(np.where(hit, pen * (1.0 + dist), dist)))


def ks_statistic(residuals, dist):
    """Kolmogorov-Smirnov distance between the sample and ``dist.cdf``."""
    x = np.sort(np.asarray(residuals, dtype=float))
    n = x.size
    F = np.asarray(dist.cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n), 0.0))


def ks_pvalue(residuals, dist):
    """Asymptotic Kolmogorov p-value of the KS distance, with sqrt(n) scaling.
    No correction is made for estimated parameters."""
    x = np.asarray(residuals, dtype=float)
    if x.size < 30:
        raise DomainError("KS test needs at least 30 observations")
    d = ks_statistic(x, dist)
    return float(kolmogorov(np.sqrt(x.size) * d))


def evaluate_pair(realized_bank, var_bank, realized_sys, covar, alpha, beta, lags=4):
    """
    Run the full battery for one (bank, model, alpha, beta) cell.

    Returns a list of dicts with keys ``stage, test, statistic, df,
    p_value``; first-stage rows test the VaR at ``alpha``, second-stage rows
    the CoVaR at ``beta`` on the bank's violation days.
    """
    rows = []
    h1 = hit_sequence(realized_bank, var_bank, alpha)
    for name, res in (("uc", lr_uc(h1)), ("ind", lr_ind(h1)), ("cc", lr_cc(h1)),
                      ("dq", dq_test(h1, var_bank, lags))):
        rows.append(dict(stage="var", test=name, statistic=res.statistic, df=res.df,
                         p_value=res.p_value, n=h1.n, hits=h1.x))
    rows.append(dict(stage="var", test="LM", statistic=loss_lm(realized_bank, var_bank),
                     df="", p_value="", n=h1.n, hits=h1.x))
    rows.append(dict(stage="var", test="LA",
                     statistic=loss_la(realized_bank, var_bank, alpha), df="", p_value="",
                     n=h1.n, hits=h1.x))
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            h2 = conditional_subset(h1, realized_sys, covar, beta)
    except EmptySubset:
        rows.append(dict(stage="covar", test="empty", statistic="", df="", p_value="",
                         n=0, hits=0))
        return rows
    mask = np.asarray(h1.bits).astype(bool)
    ys, cs = np.asarray(realized_sys)[mask], np.asarray(covar)[mask]
    tests = [("uc", lr_uc(h2))]
    if h2.n >= 2:
        tests += [("ind", lr_ind(h2)), ("cc", lr_cc(h2))]
    if h2.n > lags + 2:
        tests.append(("dq", dq_test(h2, cs, lags)))
    for name, res in tests:
        rows.append(dict(stage="covar", test=name, statistic=res.statistic, df=res.df,
                         p_value=res.p_value, n=h2.n, hits=h2.x))
    rows.append(dict(stage="covar", test="LM", statistic=loss_lm(ys, cs), df="", p_value="",
                     n=h2.n, hits=h2.x))
    rows.append(dict(stage="covar", test="LA", statistic=loss_la(ys, cs, beta), df="",
                     p_value="", n=h2.n, hits=h2.x))
    return rows
