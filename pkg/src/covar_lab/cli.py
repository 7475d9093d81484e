"""Command line entry point: ``covar-lab run | backtest | gsib``."""
import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import CovarLabError
from .gsib import (CATEGORIES, EQUAL_WEIGHTS, IndicatorPanel, adjusted_score, arpe, dcovar_score, gsib_score,
                   load_indicators, min_distance_weights)
from .runner import emit_report, load_config, run_pipeline

log = logging.getLogger("covar_lab")


def _cmd_run(args):
    cfg = load_config(args.config)
    if args.flip_sign:
        cfg = replace(cfg, flip_sign=True)
    if args.output:
        cfg = replace(cfg, output=args.output)
    out = run_pipeline(cfg)
    print(out)


def _cmd_backtest(args):
    reports = emit_report(args.results)
    print(reports["summary"].to_string(index=False))


def _cmd_gsib(args):
    """
    Compare GSIB scores with ΔCoVaR scores year by year.  ``--scores`` is
    either a pipeline ``risk.csv`` (``date, ticker, ..., delta_covar``;
    filtered with ``--model/--alpha/--beta``) or a table ``year, ticker,
    score`` of ΔCoVaR scores in bps.
    """
    panel = load_indicators(args.indicators)
    scores = pd.read_csv(args.scores)
    if "delta_covar" in scores.columns:
        sel = scores
        for col, val in (("model", args.model), ("alpha", args.alpha), ("beta", args.beta)):
            if val is not None and col in sel.columns:
                sel = sel[sel[col] == val]
        years = sorted(set(panel.frame["year"]))
        parts = []
        for yr in years:
            s = dcovar_score(sel, yr)
            parts.append(pd.DataFrame({"year": yr, "ticker": s.index, "score": s.to_numpy()}))
        scores = pd.concat(parts, ignore_index=True)
    frame = panel.frame.merge(scores[["year", "ticker", "score"]], on=["year", "ticker"])
    if frame.empty:
        raise CovarLabError("no (year, ticker) overlap between indicators and scores")
    sub = IndicatorPanel(frame)
    target = frame["score"].to_numpy(dtype=float)
    w = min_distance_weights(sub, target)
    out = frame[["year", "ticker", "score"]].copy()
    out["gsib"] = gsib_score(sub, EQUAL_WEIGHTS)
    out["adjusted"] = adjusted_score(sub, w)
    dest = Path(args.output)
    dest.mkdir(parents=True, exist_ok=True)
    out.to_csv(dest / "gsib_scores.csv", index=False, float_format="%.12g")
    weights = pd.DataFrame({"category": list(CATEGORIES), "weight": w})
    weights.to_csv(dest / "gsib_weights.csv", index=False, float_format="%.12g")
    summary = {
        "arpe_equal": arpe(target, gsib_score(sub, EQUAL_WEIGHTS, round_to_bp=False)),
        "arpe_min_distance": arpe(target, gsib_score(sub, w, round_to_bp=False)),
        "weights": [float(v) for v in np.asarray(w)],
        "n": int(target.size),
    }
    with open(dest / "gsib_manifest.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(summary, indent=2, sort_keys=True))


def build_parser():
    p = argparse.ArgumentParser(prog="covar-lab", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the rolling-window pipeline")
    r.add_argument("--config", required=True)
    r.add_argument("--output", help="override the output directory")
    r.add_argument("--flip-sign", action="store_true",
                   help="report VaR/CoVaR as positive loss numbers")
    r.set_defaults(func=_cmd_run)

    b = sub.add_parser("backtest", help="rebuild backtest reports from a results directory")
    b.add_argument("--results", required=True)
    b.set_defaults(func=_cmd_backtest)

    g = sub.add_parser("gsib", help="GSIB vs ΔCoVaR scores and minimum distance weights")
    g.add_argument("--indicators", required=True)
    g.add_argument("--scores", required=True)
    g.add_argument("--output", default=".")
    g.add_argument("--model")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.set_defaults(func=_cmd_gsib)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CovarLabError as exc:
        print(f"covar-lab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
