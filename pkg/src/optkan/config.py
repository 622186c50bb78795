"""Benchmark configuration: one flat ``key = value`` file plus CLI overrides.

Network widths, window length, Adam constants and the rest each get a
default here, and the benchmark echoes all of them into its report.
"""
from __future__ import annotations

import configparser
import datetime as dt
from dataclasses import dataclass, field, fields
from pathlib import Path

from .data import GeneratorConfig, _coerce

_SECTION = "optkan"


@dataclass
class ModelConfig:
    window: int = 5
    grid_intervals: int = 5
    spline_order: int = 3
    grid_range: float = 1.5
    kan_hidden: tuple = (8,)
    kan_edge_w_silu: float = 1.0
    kan_init: str = "unit"
    convkan_filters: tuple = (4,)
    convkan_width: int = 3
    convkan_head: tuple = (16,)
    lstm_hidden: int = 16
    convlstm_hidden: int = 4
    convlstm_width: int = 3


@dataclass
class BenchConfig:
    seed: int = 2020
    source_csv: str = ""
    cutoff: dt.date = dt.date(2020, 8, 31)
    batch_size: int = 32
    learning_rate: float = 1e-5
    kan_epochs: int = 50
    lstm_epochs: int = 200
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    garch_order: str = "GARCH(1,1)"
    eval_space: str = "denormalized price"
    prediction_rows: int = 240
    models: tuple = ("B-S", "B-S-M", "LSTM", "Conv-LSTM", "KANs", "Conv-KANs")
    generator: GeneratorConfig = field(default_factory=lambda: GeneratorConfig(price_tick=1e-4))
    model: ModelConfig = field(default_factory=ModelConfig)

    def flat(self) -> dict:
        """All settings as one flat mapping (what gets echoed into reports)."""
        out = {}
        for f in fields(self):
            if f.name in ("generator", "model"):
                continue
            out[f.name] = getattr(self, f.name)
        for sub in (self.generator, self.model):
            for f in fields(sub):
                out[f.name] = getattr(sub, f.name)
        return out

    def override(self, mapping: dict) -> "BenchConfig":
        unknown = []
        for key, raw in mapping.items():
            for target in (self, self.generator, self.model):
                names = {f.name for f in fields(target)} - {"generator", "model"}
                if key in names:
                    value = _coerce_any(raw, getattr(target, key))
                    setattr(target, key, value)
                    break
            else:
                unknown.append(key)
        if unknown:
            raise KeyError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return self


def _coerce_any(raw, default):
    if isinstance(raw, str) and isinstance(default, tuple):
        parts = [p for p in raw.replace(",", " ").split() if p]
        if all(isinstance(d, int) for d in default) and default:
            return tuple(int(p) for p in parts)
        if all(isinstance(d, str) for d in default) and default:
            return tuple(p.strip() for p in raw.split(","))
        return tuple(float(p) for p in parts)
    return _coerce(raw, default)


def read_flat_config(path) -> dict:
    """Parse ``key = value`` lines (``#``/``;`` comments) into a dict of strings."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    parser.read_string(f"[{_SECTION}]\n{text}")
    return dict(parser[_SECTION])


def load_bench_config(path=None, overrides: dict | None = None) -> BenchConfig:
    cfg = BenchConfig()
    if path:
        cfg.override(read_flat_config(path))
    if overrides:
        cfg.override(overrides)
    return cfg


def write_flat_config(path, cfg: BenchConfig) -> Path:
    lines = []
    for key, value in cfg.flat().items():
        if isinstance(value, tuple):
            value = ", ".join(str(v) for v in value)
        elif isinstance(value, dt.date):
            value = value.isoformat()
        lines.append(f"{key} = {value}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
