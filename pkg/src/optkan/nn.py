"""Parameter containers, the affine layer, and the shared checkpoint format.

Checkpoint layout (JSON)::

    {"format": "optkan-checkpoint", "version": 1,
     "model": "<kind>", "config": {...},
     "params": {"<name>": {"shape": [..], "data": [..row-major floats..]}}}

Floats are written with ``repr`` precision so a save/load round trip is exact.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autograd import Tensor, broadcast_to, matmul, silu
from .errors import DataError, ShapeError

CHECKPOINT_FORMAT = "optkan-checkpoint"
CHECKPOINT_VERSION = 1


class Module:
    """Base class: subclasses register trainable tensors as attributes or
    child modules, and ``named_parameters`` discovers them in a stable order."""

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{key}.{i}."))
                    elif isinstance(item, Tensor) and item.requires_grad:
                        out[f"{key}.{i}"] = item
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]):
        params = self.named_parameters()
        missing = set(params) ^ set(state)
        if missing:
            raise DataError(f"checkpoint/model parameter mismatch: {sorted(missing)}")
        for k, p in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{k}: checkpoint shape {arr.shape} != model {p.shape}")
            p.data[...] = arr


class Linear(Module):
    """y = x W + b on inputs with arbitrary leading dims."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, scale: float | None = None):
        bound = scale if scale is not None else 1.0 / np.sqrt(n_in)
        self.weight = Tensor(rng.uniform(-bound, bound, size=(n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        y = matmul(x, self.weight)
        return y + broadcast_to(self.bias, y.shape)


class MLPHead(Module):
    """Affine layers with SiLU between them and a linear output."""

    def __init__(self, widths: list[int], rng: np.random.Generator):
        self.layers = [Linear(a, b, rng) for a, b in zip(widths[:-1], widths[1:])]

    def forward(self, x: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = silu(x)
        return x


def save_checkpoint(path, model: Module, kind: str, config: dict) -> Path:
    path = Path(path)
    params = {name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
              for name, arr in model.state_dict().items()}
    doc = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION,
           "model": kind, "config": config, "params": params}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return path


def read_checkpoint(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not an {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    arrays = {}
    for name, entry in doc["params"].items():
        data = np.asarray(entry["data"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if data.size != int(np.prod(shape)):
            raise DataError(f"{path}: parameter {name} has {data.size} values for shape {shape}")
        arrays[name] = data.reshape(shape)
    doc["arrays"] = arrays
    return doc
