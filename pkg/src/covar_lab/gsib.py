"""
GSIB-style scores in basis points and their comparison with ΔCoVaR.

A category score is a bank's share of the sample total in basis points; the
GSIB score is a weighted average of the five category scores.  Minimum
distance weights minimize the average relative error (ARPE) between GSIB
scores and ΔCoVaR-implied scores.  ARPE is a sum of absolute values of
functions affine in the weights, so the minimization over the simplex is a
linear program.
"""
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import optimize

from .errors import DomainError, EmptyYear, LengthMismatch, MalformedFile, NonConvergent, \
    ZeroTarget, ZeroTotal

__all__ = [
    "CATEGORIES",
    "IndicatorPanel",
    "bps_score",
    "gsib_score",
    "dcovar_score",
    "arpe",
    "min_distance_weights",
    "adjusted_score",
    "load_indicators",
    "EQUAL_WEIGHTS",
]

CATEGORIES = ("size", "interconnectedness", "substitutability", "complexity", "cja")
EQUAL_WEIGHTS = np.full(5, 0.2)


@dataclass(frozen=True)
class IndicatorPanel:
    """
    Category scores in bps, long format: one row per (year, ticker) with
    the five category columns.
    """

    frame: pd.DataFrame

    def __post_init__(self):
        missing = {"year", "ticker", *CATEGORIES} - set(self.frame.columns)
        if missing:
            raise MalformedFile(f"indicator panel lacks columns {sorted(missing)}")

    @property
    def values(self):
        return self.frame[list(CATEGORIES)].to_numpy(dtype=float)

    @property
    def keys(self):
        return list(zip(self.frame["year"], self.frame["ticker"]))

    def column_sums(self):
        return self.frame.groupby("year")[list(CATEGORIES)].sum()


def load_indicators(path):
    """Read ``year,ticker,size,interconnectedness,substitutability,complexity,cja``."""
    try:
        df = pd.read_csv(path)
    except Exception as exc:
        raise MalformedFile(f"cannot parse {path}: {exc}") from exc
    return IndicatorPanel(df.sort_values(["year", "ticker"]).reset_index(drop=True))


def bps_score(values):
    """Each entry's share of the total, in basis points."""
    v = np.asarray(values, dtype=float)
    if np.any(v < 0):
        raise DomainError("bps scores need nonnegative values")
    total = v.sum()
    if not total > 0:
        raise ZeroTotal("values sum to zero")
    return v / total * 1e4


def _weights(w):
    w = np.asarray(w, dtype=float)
    if w.shape != (5,) or np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
        raise DomainError("weights must be 5 nonnegative numbers summing to one")
    return w


def gsib_score(panel, w, round_to_bp=True):
    """Weighted average of category scores; rounded to whole bps by default."""
    vals = panel.values if isinstance(panel, IndicatorPanel) else np.asarray(panel, float)
    s = vals @ _weights(w)
    return np.round(s) if round_to_bp else s


def dcovar_score(frame, year, absolute=True):
    """
    Annual ΔCoVaR score per bank.

    ``frame`` has columns ``date, ticker, delta_covar``.  The yearly mean per
    bank is taken in absolute value (or with flipped sign when
    ``absolute=False``) and converted to bps of the cross-bank total.
    """
    df = frame.copy()
    df["year"] = pd.to_datetime(df["date"]).dt.year
    sub = df[df["year"] == year]
    if sub.empty:
        raise EmptyYear(f"no ΔCoVaR observations in {year}")
    means = sub.groupby("ticker")["delta_covar"].mean()
    mag = means.abs() if absolute else -means
    return pd.Series(bps_score(mag.to_numpy()), index=means.index, name=year)


def arpe(target_scores, candidate_scores):
    """Mean of ``|target - candidate| / target``."""
    t = np.asarray(target_scores, dtype=float).ravel()
    c = np.asarray(candidate_scores, dtype=float).ravel()
    if t.size != c.size:
        raise LengthMismatch("score vectors differ in length")
    if np.any(t <= 0):
        raise ZeroTarget("target scores must be positive")
    return float(np.mean(np.abs(t - c) / t))


def min_distance_weights(panel, target_scores):
    """
    Simplex weights minimizing ARPE between ``gsib_score(panel, w)``
    (unrounded) and the targets, solved exactly as a linear program in
    ``(w, e)`` with ``e_k >= |t_k - x_k'w| / t_k``.
    """
    X = panel.values if isinstance(panel, IndicatorPanel) else np.asarray(panel, float)
    t = np.asarray(target_scores, dtype=float).ravel()
    if X.shape[0] != t.size:
        raise LengthMismatch("panel rows and targets differ in number")
    if np.any(t <= 0):
        raise ZeroTarget("target scores must be positive")
    m = t.size
    A = X / t[:, None]
    one = np.ones(m)
    cost = np.concatenate([np.zeros(5), one / m])
    # A w - e <= 1 and -A w - e <= -1
    A_ub = np.block([[A, -np.eye(m)], [-A, -np.eye(m)]])
    b_ub = np.concatenate([one, -one])
    A_eq = np.concatenate([np.ones(5), np.zeros(m)])[None, :]
    res = optimize.linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0],
                           bounds=[(0, None)] * (5 + m), method="highs")
    if res.status != 0:
        raise NonConvergent(f"weight program failed: {res.message}")
    w = np.clip(res.x[:5], 0.0, None)
    w /= w.sum()
    # never worse than the equal-weight point
    if arpe(t, X @ w) > arpe(t, X @ EQUAL_WEIGHTS):
        w = EQUAL_WEIGHTS.copy()
    return w


def adjusted_score(panel, w_min, round_to_bp=True):
    """GSIB score under the minimum distance weights."""
    return gsib_score(panel, w_min, round_to_bp)
