"""
covar_lab: conditional value-at-risk (CoVaR) of a financial system given
individual bank distress, under normal, generalized hyperbolic, normal
tempered stable and copula dependence models, with backtests and
GSIB-style score comparisons.
"""
__version__ = "0.1.0"

from .errors import CovarLabError  # noqa: E402

__all__ = ["__version__", "CovarLabError"]
