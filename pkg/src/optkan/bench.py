"""The six-model comparison: data -> split -> normalize -> train -> evaluate -> report."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import BenchConfig, write_flat_config
from .conv_kan import ConvKanModel
from .data import (CHANNELS, N_FEATURES, DatasetSplit, NormStats, WindowedSet, fit_norm,
                   generate_market, load_csv, split_by_cutoff, window, write_csv)
from .kan import KanRegressor, SplineBasis
from .lstm import ConvLstmModel, LstmModel
from .nn import Module
from .plotting import plot_loss_curve, plot_predictions
from .pricing import bsm_price_array
from .training import (MetricsReport, TrainConfig, evaluate, predict, read_metrics_csv, train,
                       write_loss_curve)

ANALYTIC = ("B-S", "B-S-M")
NEURAL = ("LSTM", "Conv-LSTM", "KANs", "Conv-KANs")
SLUGS = {"B-S": "bs", "B-S-M": "bsm", "LSTM": "lstm", "Conv-LSTM": "conv_lstm",
         "KANs": "kan", "Conv-KANs": "conv_kan"}
CLEANUP_POLICY = "on failure partial artifacts are kept; status names the failing stage"


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def derived_seed(seed: int, purpose: str) -> int:
    """Stable per-purpose seed (independent of run order)."""
    key = int.from_bytes(hashlib.sha256(purpose.encode()).digest()[:4], "little")
    return int(np.random.SeedSequence([seed, key]).generate_state(1)[0])


def build_model(name: str, cfg: BenchConfig, seed: int) -> Module:
    m = cfg.model
    rng = np.random.default_rng(seed)
    basis = SplineBasis(m.grid_intervals, m.spline_order, -m.grid_range, m.grid_range)
    if m.kan_init not in ("fan_in", "unit"):
        raise ValueError(f"kan_init must be 'fan_in' or 'unit', got {m.kan_init!r}")
    fan_in = m.kan_init == "fan_in"
    if name == "KANs":
        return KanRegressor(CHANNELS * m.window * N_FEATURES, list(m.kan_hidden), basis, rng,
                            w_silu=m.kan_edge_w_silu, fan_in_scale=fan_in)
    if name == "Conv-KANs":
        return ConvKanModel(CHANNELS, m.window, N_FEATURES, list(m.convkan_filters),
                            m.convkan_width, 1, list(m.convkan_head), basis, rng,
                            edge_w_silu=m.kan_edge_w_silu, fan_in_scale=fan_in)
    if name == "LSTM":
        return LstmModel(CHANNELS * N_FEATURES, m.lstm_hidden, rng)
    if name == "Conv-LSTM":
        return ConvLstmModel(CHANNELS, N_FEATURES, m.convlstm_hidden, m.convlstm_width, rng)
    raise KeyError(f"unknown neural model {name!r}")


def train_config(name: str, cfg: BenchConfig) -> TrainConfig:
    epochs = cfg.kan_epochs if name in ("KANs", "Conv-KANs") else cfg.lstm_epochs
    return TrainConfig(cfg.batch_size, cfg.learning_rate, epochs, cfg.adam_beta1,
                       cfg.adam_beta2, cfg.adam_eps, derived_seed(cfg.seed, f"shuffle:{name}"))


def analytic_prices(name: str, quotes, div_to_annual: float) -> np.ndarray:
    spot = np.array([q.spot for q in quotes])
    strike = np.array([q.strike for q in quotes])
    rf = np.array([q.risk_free_rate for q in quotes])
    vol = np.array([q.garch_vol for q in quotes])
    ttm = np.array([q.time_to_maturity for q in quotes])
    kind = np.array([q.option_type for q in quotes], dtype=float)
    q_annual = np.array([q.dividend_rate for q in quotes]) * div_to_annual
    if name == "B-S":
        q_annual = np.zeros_like(q_annual)
    return np.asarray(bsm_price_array(spot, strike, rf, q_annual, vol, ttm, kind)).reshape(-1)


@dataclass
class Prepared:
    split: DatasetSplit
    stats: NormStats
    train: WindowedSet
    test: WindowedSet


def prepare(quotes, cfg: BenchConfig) -> Prepared:
    split = split_by_cutoff(quotes, cfg.cutoff)
    stats = fit_norm(split.train)
    tr, te = window(split, stats, cfg.model.window)
    return Prepared(split, stats, tr, te)


def write_predictions(path, test: WindowedSet, predicted: np.ndarray, limit: int) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("row", "date", "contract_id", "actual", "predicted"))
        for i in range(min(limit, len(test))):
            q = test.last[i]
            w.writerow((i, q.date.isoformat(), q.contract_id, repr(q.target_price),
                        repr(float(predicted[i]))))
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _versions() -> dict:
    import matplotlib
    import scipy
    return {"optkan": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "python": platform.python_version()}


def report_header(cfg: BenchConfig, prep: Prepared, garch=None) -> dict:
    h = {k: (", ".join(map(str, v)) if isinstance(v, tuple) else v)
         for k, v in cfg.flat().items()}
    h.update({"n_train_obs": len(prep.split.train), "n_test_obs": len(prep.split.test),
              "n_train_windows": len(prep.train), "n_test_windows": len(prep.test),
              "dropped_train_contracts": prep.train.dropped_contracts,
              "dropped_test_contracts": prep.test.dropped_contracts,
              "metrics_space": cfg.eval_space, "mape_guard": 1e-8,
              "label": "observed market price (target_price)"})
    if garch is not None:
        h.update({"garch_omega": repr(garch.omega), "garch_alpha": repr(garch.alpha),
                  "garch_beta": repr(garch.beta)})
    return h


def run_bench(cfg: BenchConfig, out_dir, config_path=None, log=print) -> dict:
    out = Path(out_dir)
    for sub in ("predictions", "plots", "checkpoints", "losses"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    manifest = {"subcommand": "bench", "config_path": str(config_path) if config_path else None,
                "seed": cfg.seed, "output_dir": str(out), "versions": _versions(),
                "cleanup_policy": CLEANUP_POLICY, "timings_s": {}, "artifacts": {},
                "status": "running"}
    artifacts: list[Path] = []

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except Exception as exc:
            manifest["status"] = f"failed at {name}"
            _write_manifest(out, manifest, artifacts)
            raise StageError(name, exc) from exc
        manifest["timings_s"][name] = round(time.perf_counter() - t0, 3)
        return result

    artifacts.append(write_flat_config(out / "config_used.cfg", cfg))

    def get_data():
        if cfg.source_csv:
            return load_csv(cfg.source_csv), None
        market = generate_market(cfg.generator, derived_seed(cfg.seed, "data"))
        return market.quotes, market

    quotes, market = stage("data", get_data)
    artifacts.append(write_csv(out / "data.csv", quotes))
    if market is not None:
        artifacts.append(stage("fit-garch", lambda: _write_underlying(out / "underlying.csv",
                                                                        market)))
    prep = stage("split", lambda: prepare(quotes, cfg))
    log(f"train windows {len(prep.train)}, test windows {len(prep.test)}")

    report = MetricsReport(header=report_header(cfg, prep, market.garch if market else None))
    actual = np.array([q.target_price for q in prep.test.last])
    for name in cfg.models:
        slug = SLUGS[name]
        if name in ANALYTIC:
            predicted = analytic_prices(name, prep.test.last, cfg.generator.div_to_annual)
        else:
            model = build_model(name, cfg, derived_seed(cfg.seed, f"init:{name}"))
            tcfg = train_config(name, cfg)
            log(f"training {name}: {model.n_parameters()} parameters, {tcfg.epochs} epochs")
            result = stage(f"train:{name}", lambda: train(
                model, prep.train.features, prep.train.labels, tcfg,
                checkpoint=out / "checkpoints" / f"{slug}.json",
                checkpoint_config={"name": name, "model": asdict(cfg.model)}))
            artifacts.append(result.checkpoint)
            artifacts.append(write_loss_curve(out / "losses" / f"{slug}.csv", result.losses))
            predicted = prep.stats.invert_target(predict(model, prep.test.features))
        row = evaluate(predicted, actual, name)
        report.add(row)
        artifacts.append(write_predictions(out / "predictions" / f"{slug}.csv", prep.test,
                                           predicted, cfg.prediction_rows))
        log(f"{name:<10} MSE={row.mse:.5f} RMSE={row.rmse:.5f} MAE={row.mae:.5f} "
            f"MAPE={row.mape:.5f}")

    report.header["ranking_by_MSE"] = " > ".join(report.ranking("MSE"))
    artifacts.append(report.write_csv(out / "metrics.csv"))
    artifacts.extend(stage("plots", lambda: render_plots(out)))
    (out / "metrics.txt").write_text(report.format_table() + "\n")
    artifacts.append(out / "metrics.txt")
    manifest["status"] = "ok"
    _write_manifest(out, manifest, artifacts)
    return manifest


def _write_underlying(path, market) -> Path:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date", "spot", "log_return", "garch_vol"))
        for d, s, r, v in zip(market.dates, market.spots, market.log_returns, market.sigma):
            w.writerow((d.isoformat(), repr(float(s)), repr(float(r)), repr(float(v))))
    return Path(path)


def _write_manifest(out: Path, manifest: dict, artifacts) -> Path:
    manifest["artifacts"] = {str(Path(p).relative_to(out)): sha256_file(p)
                             for p in artifacts if p is not None and Path(p).exists()}
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def render_plots(out_dir) -> list[Path]:
    """(Re)render every SVG from the CSVs already in ``out_dir``."""
    out = Path(out_dir)
    (out / "plots").mkdir(exist_ok=True)
    names = {v: k for k, v in SLUGS.items()}
    made = []
    for csv_path in sorted((out / "predictions").glob("*.csv")):
        title = f"Forecasting result of {names.get(csv_path.stem, csv_path.stem)} model"
        made.append(plot_predictions(csv_path, out / "plots" / f"{csv_path.stem}.svg", title))
    for csv_path in sorted((out / "losses").glob("*.csv")):
        title = f"Training loss, {names.get(csv_path.stem, csv_path.stem)}"
        made.append(plot_loss_curve(csv_path, out / "plots" / f"loss_{csv_path.stem}.svg", title))
    return made


def render_report(out_dir) -> str:
    """Rebuild the text table and plots from an existing report directory."""
    out = Path(out_dir)
    header, rows = read_metrics_csv(out / "metrics.csv")
    render_plots(out)
    lines = [f"{'':<10}" + "".join(f"{m:>12}" for m in ("MSE", "RMSE", "MAE", "MAPE"))]
    for name, *vals in rows:
        lines.append(f"{name:<10}" + "".join(f"{v:>12.5f}" for v in vals))
    table = "\n".join(lines)
    (out / "metrics.txt").write_text(table + "\n")
    return table
