"""
Rolling-window pipeline: margins, dependence, VaR/CoVaR forecasts, reports.

Every window is an independent task (GARCH margins, one joint fit per
mixture family, one copula per system/bank pair, then all (alpha, beta)
queries), so serial and parallel runs give identical output.  Results are
merged in window order and written as CSV with a JSON manifest.
"""
import csv
import hashlib
import json
import logging
import os
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from functools import partial
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .backtest import evaluate_pair, ks_pvalue
from .copulas import pseudo_observations, select_by_aic
from .covar import covar_eq_gaussian, covar_leq_copula, covar_leq_mixture, to_return_space
from .errors import CovarLabError, DomainError, MissingResults
from .garch import fit_gjr, var_forecast
from .ingest import load_price_panel, rolling_windows, to_log_returns
from .mvmodels import EMConfig, bivariate_margin, fit_em
from .simulate import synthetic_market
from .unidist import FFT_HALFWIDTH, FFT_POINTS

__all__ = ["RunConfig", "load_config", "run_pipeline", "emit_report", "RunFailed",
           "DEFAULT_GRID", "MODELS"]

log = logging.getLogger(__name__)

MODELS = ("MNormal", "MGH", "MNTS", "Copula")
DEFAULT_GRID = ((0.5, 0.025), (0.05, 0.05), (0.05, 0.025), (0.05, 0.01),
                (0.025, 0.05), (0.025, 0.025), (0.01, 0.05))
RISK_COLUMNS = ["date", "ticker", "model", "alpha", "beta", "var", "covar", "covar_median",
                "delta_covar"]
BACKTEST_COLUMNS = ["ticker", "model", "alpha", "beta", "stage", "test", "statistic", "df",
                    "p_value"]
MAX_FAIL_SHARE = 0.05


class RunFailed(CovarLabError, RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    """
    Pipeline settings.  ``input`` is a price CSV; without it a synthetic
    market of ``synthetic`` = ``{days, banks}`` is generated from ``seed``.
    """

    output: str = "results"
    input: str = None
    synthetic: dict = None
    system: str = None
    tickers: list = None
    models: tuple = MODELS
    grid: tuple = DEFAULT_GRID
    window: int = 1305
    start: str = None
    end: str = None
    seed: int = 0
    workers: int = 1
    refit_every: int = 1
    flip_sign: bool = False
    fft_points: int = FFT_POINTS
    fft_halfwidth: float = FFT_HALFWIDTH
    em_tol: float = 1e-7
    em_max_iter: int = 500
    nts_grid: int = 480
    mixing_maxiter: int = 5

    def __post_init__(self):
        if not self.models or set(self.models) - set(MODELS):
            raise DomainError(f"models must be a nonempty subset of {MODELS}")
        for a, b in self.grid:
            if not (0 < a < 1 and 0 < b < 1):
                raise DomainError(f"grid levels must lie in (0, 1): {(a, b)}")
        if self.input is None and self.synthetic is None:
            raise DomainError("config needs an input file or a synthetic block")
        if self.refit_every < 1:
            raise DomainError("refit_every must be at least 1")

    @property
    def em_config(self):
        return EMConfig(tol=self.em_tol, max_iter=self.em_max_iter, nts_grid=self.nts_grid,
                        mixing_maxiter=self.mixing_maxiter)

    def fingerprint(self):
        # worker count and output location do not change results
        d = {k: v for k, v in asdict(self).items() if k not in ("workers", "output")}
        blob = json.dumps(d, sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()


def load_config(path):
    """Read a YAML (or JSON) config; ``COVAR_LAB_WORKERS`` overrides ``workers``."""
    with open(path) as fh:
        raw = yaml.safe_load(fh) or {}
    base = Path(path).resolve().parent
    for key in ("input", "output"):
        if raw.get(key) is not None and not os.path.isabs(raw[key]):
            raw[key] = str(base / raw[key])
    if "grid" in raw:
        raw["grid"] = tuple(tuple(float(v) for v in pair) for pair in raw["grid"])
    if "models" in raw:
        raw["models"] = tuple(raw["models"])
    env = os.environ.get("COVAR_LAB_WORKERS")
    if env:
        raw["workers"] = int(env)
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise DomainError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(**raw)


def _prices(cfg):
    if cfg.input is not None:
        panel = load_price_panel(cfg.input)
        tickers = list(panel.tickers)
    else:
        syn = dict(cfg.synthetic)
        df = synthetic_market(int(syn.get("days", 400)), int(syn.get("banks", 3)), cfg.seed,
                              rho=float(syn.get("rho", 0.55)))
        out = Path(cfg.output)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "prices.csv"
        df.to_csv(path, index=False, float_format="%.10f")
        panel = load_price_panel(path)
        tickers = list(panel.tickers)
    system = cfg.system or tickers[0]
    banks = list(cfg.tickers) if cfg.tickers else [t for t in tickers if t != system]
    if system in banks or len(banks) < 1:
        raise DomainError("need a system ticker and at least one distinct bank")
    return panel.select([system] + banks)


# --- one window group ------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def _dists(models):
    out = []
    if set(models) & {"MNormal", "MGH", "MNTS"}:
        out.append("normal")
    if "Copula" in models:
        out.append("skewt")
    return out


def _pair(a, b):
    m = min(a.size, b.size)
    return np.column_stack([a[-m:], b[-m:]])


def _estimate(window, cfg):
    """All estimation for one window: GARCH margins and dependence models."""
    y = window.lookback_returns
    d = y.shape[1]
    garch = {dist: [fit_gjr(y[:, k], dist=dist) for k in range(d)] for dist in _dists(cfg.models)}
    dep = {}
    for model in cfg.models:
        if model == "Copula":
            g = garch["skewt"]
            dep[model] = {j: select_by_aic(pseudo_observations(
                _pair(g[0].residuals, g[j].residuals), margins=[g[0].dist, g[j].dist]))
                for j in range(1, d)}
        else:
            g = garch["normal"]
            m = min(f.residuals.size for f in g)
            fit = fit_em(np.column_stack([f.residuals[-m:] for f in g]), model, cfg.em_config)
            dep[model] = {j: bivariate_margin(fit, 0, j, cfg.fft_points, cfg.fft_halfwidth)
                          for j in range(1, d)}
    return garch, dep


def _forecast(window, tickers, cfg, garch, dep, refit):
    """VaR/CoVaR rows for one target day given estimated models."""
    date = str(window.target_date)
    y = window.lookback_returns
    y_last = y[-1]
    if not refit:
        garch = {k: [f.refilter(y[:, i]) for i, f in enumerate(v)] for k, v in garch.items()}
    risk, eq, ks = [], [], []
    n = len(tickers)
    for model in cfg.models:
        g = garch["skewt" if model == "Copula" else "normal"]
        sig = [f.forecast() for f in g]
        if model == "Copula":
            margins = [f.dist for f in g]
            covar_fn = {j: partial(covar_leq_copula, dep[model][j], margins[0])
                        for j in range(1, n)}
        else:
            laws = dep[model]
            margins = [laws[1].margin_x] + [laws[j].margin_y for j in range(1, n)]
            covar_fn = {j: partial(covar_leq_mixture, laws[j]) for j in range(1, n)}
        for j in range(n):
            ks.append([date, tickers[j], model, _fmt(ks_pvalue(g[j].residuals, margins[j]))])

        def to_ret(c):
            return float(to_return_space(c, g[0], sig[0], y_last[0]))

        for j in range(1, n):
            cache = {}
            for a, b in cfg.grid:
                for lvl in (a, 0.5):
                    if (lvl, b) not in cache:
                        cache[(lvl, b)] = to_ret(covar_fn[j](lvl, b))
                var_j = float(var_forecast(g[j], sig[j], y_last[j], margins[j].quantile(a)))
                cv, cm = cache[(a, b)], cache[(0.5, b)]
                risk.append([date, tickers[j], model, a, b, var_j, cv, cm, cv - cm])
                if model == "MNormal":
                    rho = dep[model][j].rho
                    e_cv = to_ret(covar_eq_gaussian(rho, a, b))
                    e_cm = to_ret(covar_eq_gaussian(rho, 0.5, b))
                    eq.append([date, tickers[j], "MNormal=", a, b, var_j, e_cv, e_cm, e_cv - e_cm])
    realized = [[date, t, _fmt(r)] for t, r in zip(tickers, window.target_return)]
    return {"risk": risk, "eq": eq, "ks": ks, "returns": realized}


def _group_task(args):
    """
    Estimate on the first window of a group and forecast every window in
    it.  With ``refit_every = 1`` each group is a single window.  Failures
    are reported per window and never raise.
    """
    group, tickers, cfg = args
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            garch, dep = _estimate(group[0], cfg)
        except Exception as exc:  # noqa: BLE001 - an estimation failure skips the group
            msg = f"{type(exc).__name__}: {exc}"
            return [(w.index, None, msg) for w in group]
        for k, w in enumerate(group):
            try:
                out.append((w.index, _forecast(w, tickers, cfg, garch, dep, k == 0), None))
            except Exception as exc:  # noqa: BLE001
                out.append((w.index, None, f"{type(exc).__name__}: {exc}"))
    return out


# --- pipeline -------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _risk_rows(rows, flip):
    sign = -1.0 if flip else 1.0
    out = []
    for date, t, model, a, b, var, cv, cm, dc in rows:
        out.append([date, t, model, _fmt(a), _fmt(b), _fmt(sign * var), _fmt(sign * cv),
                    _fmt(sign * cm), _fmt(sign * dc)])
    return out


def run_pipeline(cfg):
    """
    Run every window, write ``risk.csv``, ``covar_eq.csv``, ``returns.csv``,
    ``ks.csv``, ``failures.csv`` and ``manifest.json`` under ``cfg.output``,
    then the backtest reports.

    Raises
    ------
    RunFailed
        More than 5% of the windows failed.
    """
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    prices = _prices(cfg)
    returns = to_log_returns(prices)
    tickers = list(returns.tickers)
    windows = rolling_windows(returns, cfg.window, cfg.start, cfg.end)
    step = cfg.refit_every
    tasks = [(windows[k:k + step], tickers, cfg) for k in range(0, len(windows), step)]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            grouped = list(pool.map(_group_task, tasks))
    else:
        grouped = [_group_task(t) for t in tasks]
    results = sorted((r for g in grouped for r in g), key=lambda r: r[0])
    dates = {w.index: str(w.target_date) for w in windows}
    risk, eq, ks, realized, failures = [], [], [], [], []
    for idx, res, err in results:
        if err is not None:
            log.error("window %d failed: %s", idx, err)
            failures.append([idx, dates[idx], err])
            continue
        risk += res["risk"]
        eq += res["eq"]
        ks += res["ks"]
        realized += res["returns"]
    _write_rows(out / "risk.csv", RISK_COLUMNS, _risk_rows(risk, cfg.flip_sign))
    _write_rows(out / "covar_eq.csv", RISK_COLUMNS, _risk_rows(eq, cfg.flip_sign))
    _write_rows(out / "returns.csv", ["date", "ticker", "return"], realized)
    _write_rows(out / "ks.csv", ["date", "ticker", "model", "ks_pvalue"], ks)
    _write_rows(out / "failures.csv", ["window", "date", "error"], failures)
    manifest = {
        "package": "covar_lab",
        "version": __version__,
        "config_hash": cfg.fingerprint(),
        "config": {k: v for k, v in asdict(cfg).items() if k not in ("workers", "output")},
        "seed": cfg.seed,
        "tickers": tickers,
        "n_windows": len(windows),
        "n_failed": len(failures),
        "sign_convention": "flipped" if cfg.flip_sign else "as modeled",
        "versions": {"python": platform.python_version(), "numpy": np.__version__,
                     "pandas": pd.__version__, "scipy": _scipy_version()},
        "outputs": ["risk.csv", "covar_eq.csv", "returns.csv", "ks.csv", "failures.csv"],
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=list)
        fh.write("\n")
    if windows and len(failures) > MAX_FAIL_SHARE * len(windows):
        raise RunFailed(f"{len(failures)} of {len(windows)} windows failed")
    emit_report(out)
    return out


def _scipy_version():
    import scipy

    return scipy.__version__


# --- reports --------------------------------------------------------------

def _read_results(results_dir):
    d = Path(results_dir)
    need = ["risk.csv", "returns.csv", "manifest.json"]
    if not d.is_dir() or any(not (d / f).exists() for f in need):
        raise MissingResults(f"{d} does not hold pipeline outputs ({', '.join(need)})")
    risk = pd.read_csv(d / "risk.csv")
    eq = pd.read_csv(d / "covar_eq.csv") if (d / "covar_eq.csv").exists() else None
    rets = pd.read_csv(d / "returns.csv")
    with open(d / "manifest.json") as fh:
        manifest = json.load(fh)
    return risk, eq, rets, manifest


def emit_report(results_dir):
    """
    Build ``backtest.csv``, ``summary.csv``, ``covar_average.csv`` and the
    long-format ``covar_long.csv`` from pipeline outputs.

    Returns
    -------
    dict of DataFrames keyed by report name.

    Raises
    ------
    MissingResults
    """
    d = Path(results_dir)
    risk, eq, rets, manifest = _read_results(d)
    if eq is not None and len(eq):
        risk = pd.concat([risk, eq], ignore_index=True)
    if risk.empty:
        raise MissingResults(f"{d} holds no forecasts")
    sign = -1.0 if manifest.get("sign_convention") == "flipped" else 1.0
    system = manifest["tickers"][0]
    wide = rets.pivot(index="date", columns="ticker", values="return")
    rows = []
    for (ticker, model, a), grp in risk.groupby(["ticker", "model", "alpha"], sort=True):
        first = True
        for b, cell in grp.groupby("beta", sort=True):
            cell = cell.sort_values("date")
            dates = cell["date"].to_numpy()
            yb = wide.loc[dates, ticker].to_numpy()
            ys = wide.loc[dates, system].to_numpy()
            res = evaluate_pair(yb, sign * cell["var"].to_numpy(), ys,
                                sign * cell["covar"].to_numpy(), a, b)
            for r in res:
                if r["stage"] == "var":
                    if not first:
                        continue
                    rows.append([ticker, model, a, "", r["stage"], r["test"], r["statistic"],
                                 r["df"], r["p_value"]])
                else:
                    rows.append([ticker, model, a, b, r["stage"], r["test"], r["statistic"],
                                 r["df"], r["p_value"]])
            first = False
    bt = pd.DataFrame(rows, columns=BACKTEST_COLUMNS)
    bt.to_csv(d / "backtest.csv", index=False, float_format="%.12g")

    num = bt.copy()
    # CoVaR= rows form part of the MNormal block, flagged by conditioning
    num["conditioning"] = np.where(num["model"].str.endswith("="), "eq", "leq")
    num["model"] = num["model"].str.rstrip("=")
    num = num[~((num["conditioning"] == "eq") & (num["stage"] == "var"))]
    num["statistic"] = pd.to_numeric(num["statistic"], errors="coerce")
    num["p_value"] = pd.to_numeric(num["p_value"], errors="coerce")
    summary_rows = []
    for (model, cond, stage, test), grp in num.groupby(["model", "conditioning", "stage", "test"],
                                                       sort=True):
        keys = ["alpha"] if stage == "var" else ["alpha", "beta"]
        for key, cell in grp.groupby(keys, sort=True):
            key = key if isinstance(key, tuple) else (key,)
            a = key[0]
            b = key[1] if len(key) > 1 else ""
            value = cell["statistic"] if test in ("LM", "LA") else cell["p_value"]
            summary_rows.append([model, cond, stage, a, b, test, value.mean(),
                                 int(value.notna().sum())])
    summary = pd.DataFrame(summary_rows, columns=["model", "conditioning", "stage", "alpha",
                                                  "beta", "test", "mean", "n_banks"])
    summary.to_csv(d / "summary.csv", index=False, float_format="%.12g")

    avg = (risk.groupby(["date", "model", "alpha", "beta"], sort=True)[
        ["var", "covar", "covar_median", "delta_covar"]].mean().reset_index())
    avg.to_csv(d / "covar_average.csv", index=False, float_format="%.12g")
    long = risk.melt(id_vars=["date", "ticker", "model", "alpha", "beta"],
                     value_vars=["var", "covar", "covar_median", "delta_covar"],
                     var_name="measure", value_name="value")
    long.to_csv(d / "covar_long.csv", index=False, float_format="%.12g")
    return {"backtest": bt, "summary": summary, "covar_average": avg, "covar_long": long}
