"""
CoVaR under a Gaussian pair.

Two conditioning events are compared: the bank exactly at its VaR (CoVaR=)
and the bank at or below its VaR (CoVaR<=).  The second looks deeper into
the tail, so it reports more stress, and the gap widens with correlation.
"""
import numpy as np

from covar_lab.covar import (covar_eq_gaussian, covar_leq_gaussian, covar_leq_mixture,
                             delta_covar)
from covar_lab.mixing import Degenerate
from covar_lab.mvmodels import BivariateLaw

alpha, beta = 0.05, 0.05
print(f"{'rho':>5} {'CoVaR=':>9} {'CoVaR<=':>9} {'dCoVaR<=':>9}")
for rho in (0.0, 0.2, 0.4, 0.6, 0.8, 0.95):
    eq = covar_eq_gaussian(rho, alpha, beta)
    leq = covar_leq_gaussian(rho, alpha, beta)
    d = delta_covar(leq, covar_leq_gaussian(rho, 0.5, beta))
    print(f"{rho:5.2f} {eq:9.4f} {leq:9.4f} {float(d):9.4f}")

# at zero correlation the bank carries no information about the system
law = BivariateLaw(Degenerate(), np.zeros(2), np.zeros(2), np.eye(2))
d0 = delta_covar(covar_leq_mixture(law, 0.05, beta), covar_leq_mixture(law, 0.5, beta))
print("\nindependent pair, delta CoVaR:", float(d0))
