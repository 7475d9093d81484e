"""
Heavy tails change the answer.

Standardized residuals from a skewed, fat-tailed market are fitted with a
multivariate normal, a generalized hyperbolic (MGH) and a normal tempered
stable (MNTS) law, and with a copula on skew-t margins.  The CoVaR of the
system given one bank is then compared across the four models.
"""
import numpy as np

from covar_lab.copulas import pseudo_observations, select_by_aic
from covar_lab.covar import covar_leq_copula, covar_leq_mixture
from covar_lab.garch import fit_gjr
from covar_lab.mvmodels import EMConfig, bivariate_margin, fit_em
from covar_lab.simulate import synthetic_market

prices = synthetic_market(1500, 1, seed=11)
r = np.diff(np.log(prices.iloc[:, 1:].to_numpy(float)), axis=0)

normal_margins = [fit_gjr(r[:, k]) for k in range(2)]
m = min(f.residuals.size for f in normal_margins)
eps = np.column_stack([f.residuals[-m:] for f in normal_margins])

laws = {}
for family in ("MNormal", "MGH", "MNTS"):
    fit = fit_em(eps, family, EMConfig(nts_grid=200))
    laws[family] = bivariate_margin(fit, 0, 1, n_points=4096, halfwidth=30.0)
    print(f"{family:8s} loglik {fit.loglik:10.2f}")

skew_margins = [fit_gjr(r[:, k], dist="skewt") for k in range(2)]
m = min(f.residuals.size for f in skew_margins)
u = pseudo_observations(np.column_stack([f.residuals[-m:] for f in skew_margins]),
                        margins=[f.dist for f in skew_margins])
cop = select_by_aic(u)
print(f"copula selected by AIC: {cop.family} {cop.params}")

print(f"\n{'model':8s} {'CoVaR(5%,5%)':>13} {'CoVaR(1%,5%)':>13}  (standardized units)")
for family, law in laws.items():
    print(f"{family:8s} {covar_leq_mixture(law, 0.05, 0.05):13.4f} "
          f"{covar_leq_mixture(law, 0.01, 0.05):13.4f}")
sys_margin = skew_margins[0].dist
print(f"{'Copula':8s} {covar_leq_copula(cop, sys_margin, 0.05, 0.05):13.4f} "
      f"{covar_leq_copula(cop, sys_margin, 0.01, 0.05):13.4f}")
