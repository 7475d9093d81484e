import json
import os

import numpy as np
import pandas as pd
import pytest
from pandas.tseries.offsets import Easter

import covar_lab.runner as runner
from covar_lab.errors import DomainError, MissingResults
from covar_lab.ingest import ReturnPanel, rolling_windows
from covar_lab.runner import (DEFAULT_GRID, RISK_COLUMNS, RunConfig, RunFailed, emit_report,
                              load_config, run_pipeline)

DAYS, BANKS, WINDOW = 280, 3, 250


def _cfg(tmp, **kw):
    base = dict(synthetic={"days": DAYS, "banks": BANKS}, seed=3, window=WINDOW,
                models=("MNormal",), output=str(tmp))
    base.update(kw)
    return RunConfig(**base)


@pytest.fixture(scope="module")
def mnormal_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mn")
    run_pipeline(_cfg(out))
    return out


def _target_days(start, end):
    days = pd.bdate_range(start, end)
    hol = set()
    for y in range(days[0].year, days[-1].year + 1):
        e = pd.Timestamp(f"{y}-01-01") + Easter()
        hol |= {pd.Timestamp(f"{y}-01-01"), e - pd.Timedelta(days=2), e + pd.Timedelta(days=1),
                pd.Timestamp(f"{y}-05-01"), pd.Timestamp(f"{y}-12-25"), pd.Timestamp(f"{y}-12-26")}
    return days[~days.isin(list(hol))]


def test_full_scale_window_count():
    # TARGET trading days from January 2007 to March 2020
    target = _target_days("2007-01-02", "2020-03-30")
    lookback = _target_days("2001-01-01", "2006-12-31")[-1305:]
    dates = np.concatenate([lookback.values, target.values]).astype("datetime64[D]")
    panel = ReturnPanel(dates, ("SYS", "B1"), np.zeros((dates.size, 2)))
    ws = rolling_windows(panel, 1305, "2007-01-02", "2020-03-30")
    assert len(ws) == 3389


def test_counting_contract(mnormal_run):
    risk = pd.read_csv(mnormal_run / "risk.csv")
    n_days = DAYS - 1 - WINDOW
    assert list(risk.columns) == RISK_COLUMNS
    assert len(risk) == n_days * BANKS * len(DEFAULT_GRID)
    assert risk.groupby(["ticker", "model", "alpha", "beta"]).size().eq(n_days).all()
    eq = pd.read_csv(mnormal_run / "covar_eq.csv")
    assert len(eq) == len(risk)
    assert set(eq["model"]) == {"MNormal="}


def test_delta_covar_identity(mnormal_run):
    risk = pd.read_csv(mnormal_run / "risk.csv")
    np.testing.assert_allclose(risk["delta_covar"], risk["covar"] - risk["covar_median"],
                               atol=1e-15)
    med = risk[risk["alpha"] == 0.5]
    assert (med["delta_covar"] == 0).all()


def test_manifest(mnormal_run):
    m = json.loads((mnormal_run / "manifest.json").read_text())
    assert m["seed"] == 3
    assert m["n_failed"] == 0
    assert m["tickers"] == ["SYS", "BANK1", "BANK2", "BANK3"]
    assert len(m["config_hash"]) == 64
    assert {"numpy", "scipy", "pandas", "python"} <= set(m["versions"])


def test_single_model_summary_block(mnormal_run):
    s = pd.read_csv(mnormal_run / "summary.csv")
    assert set(s["model"]) == {"MNormal"}
    assert set(s["conditioning"]) == {"leq", "eq"}
    assert {"uc", "cc", "dq", "LM", "LA"} <= set(s["test"])


def test_summary_recomputed(mnormal_run):
    bt = pd.read_csv(mnormal_run / "backtest.csv")
    s = pd.read_csv(mnormal_run / "summary.csv")
    cell = bt[(bt["model"] == "MNormal") & (bt["stage"] == "var") & (bt["test"] == "uc")
              & (bt["alpha"] == 0.05)]
    row = s[(s["model"] == "MNormal") & (s["conditioning"] == "leq") & (s["stage"] == "var")
            & (s["test"] == "uc") & (s["alpha"] == 0.05)]
    assert len(cell) == BANKS
    assert row["mean"].item() == pytest.approx(cell["p_value"].mean(), rel=1e-10)


def test_averages_recomputed(mnormal_run):
    risk = pd.read_csv(mnormal_run / "risk.csv")
    avg = pd.read_csv(mnormal_run / "covar_average.csv")
    for (date, a, b), grp in list(risk.groupby(["date", "alpha", "beta"]))[:25]:
        row = avg[(avg["date"] == date) & (avg["model"] == "MNormal") & (avg["alpha"] == a)
                  & (avg["beta"] == b)]
        assert row["covar"].item() == pytest.approx(grp["covar"].sum() / len(grp), rel=1e-10)
        assert row["delta_covar"].item() == pytest.approx(grp["delta_covar"].mean(), rel=1e-10,
                                                          abs=1e-15)


def test_backtest_rows(mnormal_run):
    bt = pd.read_csv(mnormal_run / "backtest.csv")
    var = bt[bt["stage"] == "var"]
    assert var["beta"].isna().all()
    # one VaR block per (ticker, model, alpha)
    assert len(var.groupby(["ticker", "model", "alpha"])) == BANKS * 2 * 4
    assert (bt["p_value"].dropna().between(0, 1)).all()


def test_long_format(mnormal_run):
    long = pd.read_csv(mnormal_run / "covar_long.csv")
    risk = pd.read_csv(mnormal_run / "risk.csv")
    eq = pd.read_csv(mnormal_run / "covar_eq.csv")
    assert len(long) == 4 * (len(risk) + len(eq))


def test_emit_report_rebuilds(mnormal_run, tmp_path):
    before = (mnormal_run / "summary.csv").read_bytes()
    emit_report(mnormal_run)
    assert (mnormal_run / "summary.csv").read_bytes() == before


def test_determinism_serial_parallel(mnormal_run, tmp_path):
    run_pipeline(_cfg(tmp_path / "b", workers=2))
    for name in ("risk.csv", "covar_eq.csv", "returns.csv", "ks.csv", "backtest.csv",
                 "summary.csv", "manifest.json"):
        assert (tmp_path / "b" / name).read_bytes() == (mnormal_run / name).read_bytes(), name


def test_flip_sign(tmp_path):
    cfg = _cfg(tmp_path / "f", flip_sign=True, synthetic={"days": 258, "banks": 1},
               grid=((0.05, 0.05),))
    run_pipeline(cfg)
    plain = _cfg(tmp_path / "p", synthetic={"days": 258, "banks": 1}, grid=((0.05, 0.05),))
    run_pipeline(plain)
    a = pd.read_csv(tmp_path / "f" / "risk.csv")
    b = pd.read_csv(tmp_path / "p" / "risk.csv")
    np.testing.assert_allclose(a["covar"], -b["covar"])
    assert json.loads((tmp_path / "f" / "manifest.json").read_text())["sign_convention"] == \
        "flipped"
    # backtests undo the flip
    np.testing.assert_allclose(pd.read_csv(tmp_path / "f" / "backtest.csv")["statistic"],
                               pd.read_csv(tmp_path / "p" / "backtest.csv")["statistic"])


def test_input_csv(tmp_path):
    from covar_lab.simulate import write_synthetic_csv
    write_synthetic_csv(tmp_path / "px.csv", 260, 2, seed=4)
    cfg = RunConfig(input=str(tmp_path / "px.csv"), window=WINDOW, models=("MNormal",),
                    grid=((0.05, 0.05),), output=str(tmp_path / "o"), system="BANK1",
                    tickers=["SYS"])
    run_pipeline(cfg)
    risk = pd.read_csv(tmp_path / "o" / "risk.csv")
    assert set(risk["ticker"]) == {"SYS"}
    assert len(risk) == 260 - 1 - WINDOW


def test_missing_results(tmp_path):
    with pytest.raises(MissingResults):
        emit_report(tmp_path)
    with pytest.raises(MissingResults):
        emit_report(tmp_path / "nope")


def test_window_failures_tolerated(tmp_path, monkeypatch):
    real = runner._estimate
    bad = {WINDOW + 3}

    def flaky(window, cfg):
        if window.index in bad:
            raise FloatingPointError("forced")
        return real(window, cfg)

    monkeypatch.setattr(runner, "_estimate", flaky)
    cfg = _cfg(tmp_path, synthetic={"days": 280, "banks": 1}, grid=((0.05, 0.05),))
    run_pipeline(cfg)
    fails = pd.read_csv(tmp_path / "failures.csv")
    assert fails["window"].tolist() == [WINDOW + 3]
    assert len(pd.read_csv(tmp_path / "risk.csv")) == 280 - 1 - WINDOW - 1


def test_too_many_failures(tmp_path, monkeypatch):
    def broken(window, cfg):
        raise FloatingPointError("forced")

    monkeypatch.setattr(runner, "_estimate", broken)
    with pytest.raises(RunFailed):
        run_pipeline(_cfg(tmp_path, synthetic={"days": 260, "banks": 1}))


def test_config_validation():
    with pytest.raises(DomainError):
        RunConfig(synthetic={}, models=())
    with pytest.raises(DomainError):
        RunConfig(synthetic={}, models=("GARCH",))
    with pytest.raises(DomainError):
        RunConfig(synthetic={}, grid=((0.05, 1.0),))
    with pytest.raises(DomainError):
        RunConfig()


def test_load_config(tmp_path, monkeypatch):
    p = tmp_path / "c.yaml"
    p.write_text("synthetic: {days: 300, banks: 2}\nmodels: [MNormal, Copula]\n"
                 "grid: [[0.05, 0.05]]\noutput: res\nworkers: 1\n")
    monkeypatch.delenv("COVAR_LAB_WORKERS", raising=False)
    cfg = load_config(p)
    assert cfg.models == ("MNormal", "Copula")
    assert cfg.grid == ((0.05, 0.05),)
    assert cfg.output == str(tmp_path / "res")
    assert cfg.workers == 1
    monkeypatch.setenv("COVAR_LAB_WORKERS", "4")
    assert load_config(p).workers == 4
    assert load_config(p).fingerprint() == cfg.fingerprint()
    p.write_text("synthetic: {days: 300}\nbogus: 1\n")
    with pytest.raises(DomainError):
        load_config(p)
