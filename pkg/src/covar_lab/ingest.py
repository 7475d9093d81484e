"""
Price panels, log-returns and rolling estimation windows.

Input files are CSV with a ``date`` column (ISO 8601) followed by one
column of adjusted closing prices per ticker.  Rows with any missing or
non-positive price are dropped (listwise deletion).  Dates are treated as
ordered labels; no holiday calendar is applied.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .errors import DuplicateDate, EmptyPanel, InsufficientHistory, MalformedFile

__all__ = [
    "PricePanel",
    "ReturnPanel",
    "EstimationWindow",
    "load_price_panel",
    "to_log_returns",
    "rolling_windows",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PricePanel:
    dates: np.ndarray
    tickers: tuple
    prices: np.ndarray
    dropped: int = 0

    def __post_init__(self):
        if self.prices.shape != (self.dates.size, len(self.tickers)):
            raise MalformedFile("price matrix does not match dates and tickers")
        if np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise MalformedFile("dates must be strictly increasing")
        if np.any(~(self.prices > 0)):
            raise MalformedFile("prices must be positive")

    def select(self, tickers):
        idx = [self.tickers.index(t) for t in tickers]
        return PricePanel(self.dates, tuple(tickers), self.prices[:, idx], self.dropped)


@dataclass(frozen=True)
class ReturnPanel:
    dates: np.ndarray
    tickers: tuple
    returns: np.ndarray

    def __len__(self):
        return self.dates.size

    def to_frame(self):
        df = pd.DataFrame(self.returns, columns=list(self.tickers))
        df.insert(0, "date", pd.to_datetime(self.dates).strftime("%Y-%m-%d"))
        return df

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass(frozen=True)
class EstimationWindow:
    """Lookback returns ending the day before ``target_date``."""

    index: int
    as_of_date: np.datetime64
    target_date: np.datetime64
    lookback_returns: np.ndarray = field(repr=False)
    target_return: np.ndarray = field(repr=False)


def load_price_panel(path, schema=None):
    """
    Load a price CSV.

    Parameters
    ----------
    path : str or path-like
    schema : dict, optional
        ``{"date": <date column>, "tickers": [<columns>...]}``; defaults to a
        column called ``date`` and every other column.

    Returns
    -------
    PricePanel
        Sorted by date; ``dropped`` counts rows removed for missing or
        non-positive prices.
    """
    schema = schema or {}
    date_col = schema.get("date", "date")
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise MalformedFile(f"cannot parse {path}: {exc}") from exc
    if date_col not in raw.columns:
        raise MalformedFile(f"missing date column {date_col!r}")
    tickers = list(schema.get("tickers") or [c for c in raw.columns if c != date_col])
    if not tickers:
        raise MalformedFile("no price columns")
    missing = set(tickers) - set(raw.columns)
    if missing:
        raise MalformedFile(f"columns not found: {sorted(missing)}")
    dates = pd.to_datetime(raw[date_col].str.strip(), format="%Y-%m-%d", errors="coerce")
    if dates.isna().any():
        bad = raw.loc[dates.isna(), date_col].iloc[0]
        raise MalformedFile(f"unparsable date {bad!r}")
    if dates.duplicated().any():
        raise DuplicateDate(f"duplicated date {dates[dates.duplicated()].iloc[0].date()}")
    na_tokens = {"", "na", "nan", "null", "none", "#n/a", "n/a"}
    prices = np.empty((len(raw), len(tickers)))
    for k, col in enumerate(tickers):
        cells = raw[col].str.strip()
        is_na = cells.str.lower().isin(na_tokens)
        num = pd.to_numeric(cells.where(~is_na), errors="coerce")
        bad = num.isna() & ~is_na
        if bad.any():
            raise MalformedFile(f"unparsable price {cells[bad].iloc[0]!r} in column {col!r}")
        prices[:, k] = num.to_numpy(dtype=float)
    order = np.argsort(dates.to_numpy())
    d = dates.to_numpy()[order].astype("datetime64[D]")
    prices = prices[order]
    keep = np.all(np.isfinite(prices) & (prices > 0), axis=1)
    dropped = int((~keep).sum())
    if dropped:
        log.info("dropped %d rows with missing or non-positive prices", dropped)
    if keep.sum() < 2:
        raise EmptyPanel("fewer than two usable rows")
    return PricePanel(d[keep], tuple(tickers), prices[keep], dropped)


def to_log_returns(panel):
    """``returns[t, k] = ln(prices[t+1, k] / prices[t, k])``, dated at ``t+1``."""
    if panel.prices.shape[0] < 2:
        raise EmptyPanel("need at least two price rows")
    p = panel.prices
    return ReturnPanel(panel.dates[1:], panel.tickers, np.log(p[1:] / p[:-1]))


def rolling_windows(panel, window_len, start_date=None, end_date=None):
    """
    One window per target day in ``[start_date, end_date]``; each carries
    the ``window_len`` returns ending the day before the target.

    ``start_date`` defaults to the first day with a full lookback and
    ``end_date`` to the last day of the panel.

    Raises
    ------
    InsufficientHistory
        The first target day lacks ``window_len`` earlier returns.
    """
    n = len(panel)
    window_len = int(window_len)
    if window_len < 1 or window_len >= n:
        raise InsufficientHistory(f"window of {window_len} rows needs a longer panel ({n} rows)")
    dates = panel.dates
    lo = window_len if start_date is None else int(np.searchsorted(dates, np.datetime64(start_date, "D")))
    hi = n if end_date is None else int(np.searchsorted(dates, np.datetime64(end_date, "D"), side="right"))
    if lo < window_len:
        raise InsufficientHistory(
            f"first target {dates[min(lo, n - 1)]} has only {lo} earlier returns, need {window_len}")
    return [EstimationWindow(i, dates[i - 1], dates[i], panel.returns[i - window_len:i],
                             panel.returns[i]) for i in range(lo, hi)]
