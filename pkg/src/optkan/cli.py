"""``optkan`` command line: price, verify, gen-data, fit-garch, train, bench, report."""
from __future__ import annotations

import argparse
import csv
import datetime as dt
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import OptkanError
from .pricing import MarketParams, OptionKind, d1_d2, parity_residual, price_bs, price_bsm

OUT_ENV = "OPTKAN_OUT"
DEFAULT_OUT = "optkan-out"
NEURAL_SLUGS = {"lstm": "LSTM", "conv_lstm": "Conv-LSTM", "kan": "KANs", "conv_kan": "Conv-KANs"}

log = logging.getLogger("optkan")


def output_root() -> Path:
    return Path(os.environ.get(OUT_ENV, DEFAULT_OUT))


def _parse_set(items) -> dict:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise argparse.ArgumentTypeError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _bench_config(args):
    from .config import load_bench_config
    overrides = _parse_set(args.set)
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    return load_bench_config(args.config, overrides)


# --- price -----------------------------------------------------------------------

def cmd_price(args) -> int:
    p = MarketParams(args.spot, args.strike, args.rate, args.div, args.vol, args.ttm).validate()
    kinds = list(OptionKind) if args.kind == "both" else [OptionKind.parse(args.kind)]
    try:
        d1, d2 = d1_d2(p)
        d_text = f"d1={d1:.6f} d2={d2:.6f}"
    except OptkanError:
        d_text = "d1, d2 undefined at ttm=0 (payoff)"
    print(f"{'kind':<6}{'B-S':>14}{'B-S-M':>14}")
    for k in kinds:
        print(f"{k.name.lower():<6}{float(price_bs(p, k)):>14.6f}{float(price_bsm(p, k)):>14.6f}")
    print(d_text)
    print(f"parity residual {parity_residual(p):.3e}")
    return 0


# --- verify ----------------------------------------------------------------------

def cmd_verify(args) -> int:
    from .verify import mc_checks, parity_check, pde_check
    results = [parity_check()]
    results += mc_checks(n_paths=args.mc_paths)
    results.append(pde_check())
    if args.negative_control:
        results.append(pde_check(negative_control=True))
    rows = []
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status} {r.name}: measured={r.measured:.3e} threshold={r.threshold:.3e} {r.detail}")
        rows.append((r.name, repr(float(r.measured)), repr(float(r.threshold)), status, r.detail))
    if args.out:
        with Path(args.out).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("check", "measured", "threshold", "status", "detail"))
            w.writerows(rows)
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 1


# --- data ------------------------------------------------------------------------

def cmd_gen_data(args) -> int:
    from .bench import _write_underlying, derived_seed
    from .data import generate_market, write_csv
    cfg = _bench_config(args)
    out = Path(args.out) if args.out else output_root() / "data.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    market = generate_market(cfg.generator, derived_seed(cfg.seed, "data"))
    write_csv(out, market.quotes)
    _write_underlying(out.with_name(out.stem + "_underlying.csv"), market)
    g = market.garch
    print(f"wrote {len(market.quotes)} quotes to {out}")
    print(f"GARCH omega={g.omega:.6e} alpha={g.alpha:.6f} beta={g.beta:.6f}")
    return 0


def _read_returns(path, column):
    dates, values = [], []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        if column not in (reader.fieldnames or ()):
            raise OptkanError(f"{path}: no {column!r} column (have {reader.fieldnames})")
        for row in reader:
            if row[column] == "":
                continue
            dates.append(dt.date.fromisoformat(row["date"]) if "date" in row else len(dates))
            values.append(float(row[column]))
    return dates, np.array(values)


def cmd_fit_garch(args) -> int:
    from .volatility import volatility_series
    dates, returns = _read_returns(args.returns, args.column)
    params, series = volatility_series(dates, returns, trading_days=args.trading_days)
    print(f"omega={params.omega:.6e} alpha={params.alpha:.6f} beta={params.beta:.6f} "
          f"persistence={params.persistence:.6f}")
    if args.out:
        with Path(args.out).open("w", newline="") as fh:
            fh.write(f"# omega={params.omega!r}\n# alpha={params.alpha!r}\n"
                     f"# beta={params.beta!r}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("date", "garch_vol"))
            for d, s in zip(series.dates, series.sigma):
                w.writerow((d.isoformat() if hasattr(d, "isoformat") else d, repr(float(s))))
    return 0


# --- train / bench / report -------------------------------------------------------

def cmd_train(args) -> int:
    from .bench import SLUGS, build_model, derived_seed, prepare, train_config, write_predictions
    from .data import generate_market, load_csv
    from .training import evaluate, predict, train, write_loss_curve
    cfg = _bench_config(args)
    name = NEURAL_SLUGS[args.model]
    quotes = (load_csv(args.data) if args.data else
              generate_market(cfg.generator, derived_seed(cfg.seed, "data")).quotes)
    prep = prepare(quotes, cfg)
    model = build_model(name, cfg, derived_seed(cfg.seed, f"init:{name}"))
    tcfg = train_config(name, cfg)
    if args.epochs is not None:
        tcfg.epochs = args.epochs
    out = Path(args.out) if args.out else output_root() / "train"
    out.mkdir(parents=True, exist_ok=True)
    slug = SLUGS[name]
    result = train(model, prep.train.features, prep.train.labels, tcfg,
                   checkpoint=out / f"{slug}.json", checkpoint_config={"name": name},
                   progress=lambda e, v: log.info("epoch %d loss %.6g", e + 1, v))
    write_loss_curve(out / f"{slug}_loss.csv", result.losses)
    predicted = prep.stats.invert_target(predict(model, prep.test.features))
    write_predictions(out / f"{slug}_predictions.csv", prep.test, predicted, cfg.prediction_rows)
    row = evaluate(predicted, [q.target_price for q in prep.test.last], name)
    print(f"{name}: MSE={row.mse:.6g} RMSE={row.rmse:.6g} MAE={row.mae:.6g} MAPE={row.mape:.6g}")
    return 0


def cmd_bench(args) -> int:
    from .bench import StageError, run_bench
    cfg = _bench_config(args)
    out = Path(args.out) if args.out else output_root() / "bench"
    try:
        manifest = run_bench(cfg, out, config_path=args.config)
    except StageError as exc:
        print(f"error: {exc}; partial artifacts left in {out}", file=sys.stderr)
        return 1
    print((out / "metrics.txt").read_text(), end="")
    print(f"report written to {out} ({len(manifest['artifacts'])} artifacts)")
    return 0


def cmd_report(args) -> int:
    from .bench import render_report
    out = Path(args.dir) if args.dir else output_root() / "bench"
    print(render_report(out))
    return 0


# --- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="optkan", description=__doc__)
    ap.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
    ap.add_argument("--config", default=None, help="flat key = value config file")
    ap.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="override one config key (repeatable)")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="closed-form prices, d1/d2 and parity residual")
    p.add_argument("--spot", type=float, required=True)
    p.add_argument("--strike", type=float, required=True)
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--div", type=float, default=0.0, help="continuous dividend yield q")
    p.add_argument("--vol", type=float, default=0.2)
    p.add_argument("--ttm", type=float, required=True, help="time to maturity in years")
    p.add_argument("--kind", choices=("call", "put", "both"), default="both")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("verify", help="parity, Monte Carlo and PDE residual checks")
    p.add_argument("--negative-control", action="store_true",
                   help="also judge the raw payoff by the PDE tolerance (must FAIL)")
    p.add_argument("--mc-paths", type=int, default=1_000_000)
    p.add_argument("--out", default=None, help="write results as CSV")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-data", help="write the synthetic option chain CSV")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("fit-garch", help="fit GARCH(1,1) to a returns CSV")
    p.add_argument("returns", help="CSV with a date column and a returns column")
    p.add_argument("--column", default="log_return")
    p.add_argument("--trading-days", type=int, default=252)
    p.add_argument("--out", default=None, help="annualized volatility CSV")
    p.set_defaults(func=cmd_fit_garch)

    p = sub.add_parser("train", help="train one neural model")
    p.add_argument("--model", choices=sorted(NEURAL_SLUGS), required=True)
    p.add_argument("--data", default=None, help="option CSV (default: synthetic)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="full six-model comparison")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="re-render table and plots from a bench directory")
    p.add_argument("dir", nargs="?", default=None)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (OptkanError, ValueError, KeyError, argparse.ArgumentTypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"optkan {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
