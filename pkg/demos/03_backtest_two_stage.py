"""
Two-stage backtest.

A bank's VaR is checked first.  On the days it is breached, the system's
CoVaR should be breached with probability beta.  Here both series follow a
known AR-GJR model with Gaussian innovations, so the forecasts are correct
by construction.  Under a correct model the p-values are uniform, so an
occasional value below 0.05 is expected; persistent rejection is not.
"""
import math

import numpy as np

from covar_lab.backtest import evaluate_pair
from covar_lab.covar import covar_leq_gaussian
from covar_lab.garch import GjrParams

alpha, beta, rho, n = 0.05, 0.05, 0.6, 60_000
p = GjrParams(c=2e-4, a=0.03, alpha0=2e-6, alpha1=0.06, gamma=0.35, beta1=0.88)
rng = np.random.default_rng(4)
z = rng.standard_normal((n, 2))
z[:, 1] = rho * z[:, 0] + math.sqrt(1 - rho * rho) * z[:, 1]

y, mean, sig = np.zeros((n, 2)), np.zeros((n, 2)), np.zeros((n, 2))
s2 = np.full(2, p.alpha0 / (1 - p.persistence))
u = np.zeros(2)
for t in range(n):
    if t:
        s2 = p.alpha0 + p.alpha1 * (np.abs(u) - p.gamma * u) ** 2 + p.beta1 * s2
    mean[t] = p.c + p.a * (y[t - 1] if t else 0.0)
    sig[t] = np.sqrt(s2)
    u = sig[t] * z[t]
    y[t] = mean[t] + u

var_bank = mean[:, 1] + sig[:, 1] * -1.6448536269514722
covar = mean[:, 0] + sig[:, 0] * covar_leq_gaussian(rho, alpha, beta)
for row in evaluate_pair(y[:, 1], var_bank, y[:, 0], covar, alpha, beta):
    stat = row["statistic"]
    stat = f"{stat:10.4f}" if stat != "" else " " * 10
    pval = f"{row['p_value']:.3f}" if row["p_value"] != "" else ""
    print(f"{row['stage']:6s} {row['test']:6s} {stat} {pval:>6s}  hits {row['hits']}/{row['n']}")
