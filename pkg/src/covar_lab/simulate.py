"""
Synthetic bank-equity market for demos and end-to-end tests.

Innovations are a skewed multivariate GH draw (heavy tails, common
shocks), each series then gets its own AR-GJR-GARCH dynamics.  Prices start
at 100 and are dated on weekdays.
"""
import numpy as np
import pandas as pd

from .garch import GjrParams
from .mixing import GIG
from .mvmodels import MixtureFit

__all__ = ["synthetic_market", "write_synthetic_csv"]


def _innovations(rng, n, d, rho):
    sigma = np.full((d, d), rho) + (1.0 - rho) * np.eye(d)
    mix = GIG(-1.0, 2.0, 2.0)
    mix = mix.scaled(1.0 / mix.mean())
    gamma = np.full(d, -0.15)
    fit = MixtureFit("MGH", np.zeros(d), gamma, sigma, mix)
    x = fit.sample(rng, n)
    # standardize with the model moments
    mean = gamma * mix.mean()
    sd = np.sqrt(np.diag(fit.covariance()))
    return (x - mean) / sd


def synthetic_market(n_days, n_banks, seed, rho=0.55, start="2015-01-01", system="SYS"):
    """
    Simulated price panel with the system index first.

    Returns
    -------
    pandas.DataFrame
        Columns ``date, <system>, BANK1, ...``.
    """
    rng = np.random.default_rng(seed)
    d = n_banks + 1
    burn = 300
    eps = _innovations(rng, n_days + burn, d, rho)
    base = GjrParams(c=2e-4, a=0.03, alpha0=2e-6, alpha1=0.06, gamma=0.35, beta1=0.88)
    scale = rng.uniform(0.8, 1.6, d)
    scale[0] = 1.0
    y = np.zeros((n_days + burn, d))
    s2 = base.alpha0 * scale ** 2 / (1.0 - base.persistence)
    u_prev = np.zeros(d)
    for t in range(n_days + burn):
        if t > 0:
            s2 = (base.alpha0 * scale ** 2 + base.alpha1 * (np.abs(u_prev) - base.gamma * u_prev) ** 2
                  + base.beta1 * s2)
        u_prev = np.sqrt(s2) * eps[t]
        y[t] = base.c + (base.a * y[t - 1] if t else 0.0) + u_prev
    y = y[burn:]
    prices = 100.0 * np.exp(np.vstack([np.zeros(d), np.cumsum(y, axis=0)]))[: n_days]
    dates = pd.bdate_range(start, periods=n_days)
    cols = [system] + [f"BANK{k}" for k in range(1, n_banks + 1)]
    df = pd.DataFrame(prices, columns=cols)
    df.insert(0, "date", dates.strftime("%Y-%m-%d"))
    return df


def write_synthetic_csv(path, n_days, n_banks, seed, **kwargs):
    df = synthetic_market(n_days, n_banks, seed, **kwargs)
    df.to_csv(path, index=False, float_format="%.10f")
    return path
