"""SVG figures rendered from the benchmark CSVs.

Each plot is a function of one CSV file only. The SVG backend is pinned
to a fixed hash salt and no timestamp, so re-rendering the same CSV gives
byte-identical output.
"""
from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "svg.hashsalt": "optkan",
    "svg.fonttype": "path",
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.0,
    "figure.figsize": (6.4, 3.2),
}


def _read_columns(path) -> dict[str, list[str]]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(line for line in fh if not line.startswith("#"))
        cols: dict[str, list[str]] = {name: [] for name in reader.fieldnames or ()}
        for row in reader:
            for k, v in row.items():
                cols[k].append(v)
    return cols


def save_svg(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return path


def plot_predictions(csv_path, svg_path, title: str) -> Path:
    """Actual vs predicted price over the row index of a prediction CSV."""
    cols = _read_columns(csv_path)
    x = [int(v) for v in cols["row"]]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(x, [float(v) for v in cols["actual"]], color="black", label="actual")
        ax.plot(x, [float(v) for v in cols["predicted"]], color="tab:red", alpha=0.8,
                label="predicted")
        ax.set_xlabel("test observation")
        ax.set_ylabel("option price")
        ax.set_title(title)
        ax.legend(frameon=False, loc="upper right")
        fig.tight_layout()
        return save_svg(fig, svg_path)


def plot_loss_curve(csv_path, svg_path, title: str) -> Path:
    cols = _read_columns(csv_path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([int(v) for v in cols["epoch"]], [float(v) for v in cols["train_loss"]],
                color="tab:blue")
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("train MSE (normalized)")
        ax.set_title(title)
        fig.tight_layout()
        return save_svg(fig, svg_path)
