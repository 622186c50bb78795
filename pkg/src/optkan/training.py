"""MSE loss, Adam, the mini-batch training loop and the error-metric suite."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .autograd import Tensor, backward, no_grad, square, sub, tsum
from .errors import DataError, DivergenceError, ShapeError
from .nn import Module, save_checkpoint

MAPE_GUARD = 1e-8
METRIC_NAMES = ("MSE", "RMSE", "MAE", "MAPE")


@dataclass
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 1e-5
    epochs: int = 50
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: prediction {pred.shape} vs target {target.shape}")
    return tsum(square(sub(pred, target))) * (1.0 / pred.size)


class Adam:
    """Bias-corrected Adam over a fixed parameter list."""

    def __init__(self, params: list[Tensor], cfg: TrainConfig):
        self.params = list(params)
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.adam_beta1 ** self.t
        c2 = 1.0 - cfg.adam_beta2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= cfg.adam_beta1
            m += (1.0 - cfg.adam_beta1) * g
            v *= cfg.adam_beta2
            v += (1.0 - cfg.adam_beta2) * g * g
            p.data -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def adam_step(state: Adam, grads: list[np.ndarray]) -> list[Tensor]:
    """Apply one update from explicit gradient arrays (same order as ``state.params``)."""
    for p, g in zip(state.params, grads):
        p.grad = np.asarray(g, dtype=float)
    state.step()
    return state.params


@dataclass
class TrainResult:
    model: Module
    losses: list = field(default_factory=list)
    checkpoint: Path | None = None


def train(model: Module, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
          checkpoint: str | Path | None = None, checkpoint_config: dict | None = None,
          progress=None) -> TrainResult:
    """Shuffled mini-batch training on windowed samples; returns per-epoch mean loss."""
    n = len(labels)
    if n == 0:
        raise DataError("training set is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.parameters(), cfg)
    y_all = np.asarray(labels, dtype=float).reshape(-1, 1)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss = mse_loss(model(model.prepare(features[idx])), Tensor(y_all[idx]))
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss in epoch {epoch}", epoch=epoch)
            opt.zero_grad()
            backward(loss)
            opt.step()
            total += value * len(idx)
        losses.append(total / n)
        if progress:
            progress(epoch, losses[-1])
    path = None
    if checkpoint is not None:
        path = save_checkpoint(checkpoint, model, getattr(model, "kind", type(model).__name__),
                               {**(checkpoint_config or {}), "train": asdict(cfg)})
    return TrainResult(model, losses, path)


def predict(model: Module, features: np.ndarray, batch_size: int = 512) -> np.ndarray:
    out = []
    with no_grad():
        for start in range(0, len(features), batch_size):
            out.append(model(model.prepare(features[start:start + batch_size])).data.reshape(-1))
    return np.concatenate(out) if out else np.zeros(0)


@dataclass
class MetricRow:
    model: str
    mse: float
    rmse: float
    mae: float
    mape: float
    n: int
    n_guarded: int

    def values(self) -> tuple:
        return (self.mse, self.rmse, self.mae, self.mape)


def evaluate(predictions, targets, model: str = "") -> MetricRow:
    """MSE, RMSE, MAE and MAPE; MAPE skips rows with ``|y| < MAPE_GUARD``."""
    yhat = np.asarray(predictions, dtype=float).reshape(-1)
    y = np.asarray(targets, dtype=float).reshape(-1)
    if yhat.shape != y.shape:
        raise ShapeError(f"{yhat.size} predictions for {y.size} targets")
    if y.size == 0:
        raise DataError("nothing to evaluate")
    err = y - yhat
    keep = np.abs(y) >= MAPE_GUARD
    if not keep.any():
        raise DataError("every target is below the MAPE guard")
    mse = float(np.mean(err * err))
    return MetricRow(model, mse, math.sqrt(mse), float(np.mean(np.abs(err))),
                     float(np.mean(np.abs(err[keep] / y[keep]))), int(y.size),
                     int((~keep).sum()))


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)
    header: dict = field(default_factory=dict)

    def add(self, row: MetricRow):
        self.rows.append(row)

    def ranking(self, metric: str = "MSE") -> list[str]:
        k = METRIC_NAMES.index(metric)
        return [r.model for r in sorted(self.rows, key=lambda r: (r.values()[k], r.model))]

    def write_csv(self, path) -> Path:
        """Table-shaped CSV; ``# key=value`` lines carry the run settings."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            for key in sorted(self.header):
                fh.write(f"# {key}={self.header[key]}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("model",) + METRIC_NAMES)
            for r in self.rows:
                w.writerow([r.model] + [repr(v) for v in r.values()])
        return path

    def format_table(self) -> str:
        lines = [f"{'':<10}" + "".join(f"{m:>12}" for m in METRIC_NAMES)]
        for r in self.rows:
            lines.append(f"{r.model:<10}" + "".join(f"{v:>12.5f}" for v in r.values()))
        return "\n".join(lines)


def read_metrics_csv(path) -> tuple[dict, list[tuple]]:
    header, rows = {}, []
    with Path(path).open(newline="") as fh:
        lines = fh.read().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key] = value
        else:
            body.append(line)
    reader = csv.reader(body)
    next(reader)
    for row in reader:
        rows.append((row[0], *map(float, row[1:])))
    return header, rows


def write_loss_curve(path, losses) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "train_loss"))
        for i, v in enumerate(losses, start=1):
            w.writerow((i, repr(float(v))))
    return path
