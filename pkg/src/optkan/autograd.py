"""Reverse-mode automatic differentiation over numpy float64 arrays.

Binary operators require equal shapes; the only implicit broadcast is
against a Python scalar or a 0-d tensor. Anything else must go through
:func:`broadcast_to` so shape mistakes fail loudly.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, ShapeError

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple = ()
        self._backward = None
        self.op = "leaf"

    # -- construction helpers -------------------------------------------------
    @classmethod
    def from_op(cls, data: np.ndarray, parents: Sequence["Tensor"],
                backward: Callable[[np.ndarray], Sequence[np.ndarray | None]],
                op: str) -> "Tensor":
        """Wrap an op result; ``backward`` maps the output grad to parent grads."""
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        if _GRAD_ENABLED and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    # -- arithmetic ------------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("tensor / tensor is not supported; multiply by a reciprocal")
        return mul(self, 1.0 / float(other))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self):
        return mul(tsum(self), 1.0 / self.size)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    # -- autodiff --------------------------------------------------------------
    def backward(self):
        backward(self)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _is_scalar(x) -> bool:
    return not isinstance(x, Tensor) or x.ndim == 0


def _check_binary(a, b, name):
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape != b.shape and not (a.ndim == 0 or b.ndim == 0):
        raise ShapeError(f"{name}: shapes {a.shape} and {b.shape} differ (no broadcasting)")
    return a, b


def _reduce_to(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def add(a, b) -> Tensor:
    a, b = _check_binary(a, b, "add")
    return Tensor.from_op(a.data + b.data, (a, b),
                          lambda g: (_reduce_to(g, a.shape), _reduce_to(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = _check_binary(a, b, "sub")
    return Tensor.from_op(a.data - b.data, (a, b),
                          lambda g: (_reduce_to(g, a.shape), _reduce_to(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    """Elementwise (Hadamard) product."""
    a, b = _check_binary(a, b, "mul")
    return Tensor.from_op(a.data * b.data, (a, b),
                          lambda g: (_reduce_to(g * b.data, a.shape),
                                     _reduce_to(g * a.data, b.shape)), "mul")


hadamard = mul


def square(a: Tensor) -> Tensor:
    return Tensor.from_op(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,), "square")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign to avoid overflow in exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Tensor) -> Tensor:
    s = _sigmoid(a.data)
    return Tensor.from_op(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    t = np.tanh(a.data)
    return Tensor.from_op(t, (a,), lambda g: (g * (1.0 - t * t),), "tanh")


def silu(a: Tensor) -> Tensor:
    x = a.data
    s = _sigmoid(x)
    return Tensor.from_op(x * s, (a,), lambda g: (g * s * (1.0 + x * (1.0 - s)),), "silu")


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor.from_op(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,), "clamp")


def elementwise(op: str, a: Tensor, b: Tensor | None = None) -> Tensor:
    """Dispatch by name: add, sub, mul, hadamard, silu, sigmoid, tanh."""
    binary = {"add": add, "sub": sub, "mul": mul, "hadamard": mul}
    unary = {"silu": silu, "sigmoid": sigmoid, "tanh": tanh}
    if op in binary:
        if b is None:
            raise ShapeError(f"{op} needs two operands")
        return binary[op](a, b)
    if op in unary:
        return unary[op](a)
    raise ValueError(f"unknown elementwise op {op!r}")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; ``a`` may carry leading batch dims, ``b`` is 2-D."""
    if b.ndim != 2 or a.ndim < 1 or a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")

    def back(g):
        ga = g @ b.data.T
        a2 = a.data.reshape(-1, a.shape[-1])
        gb = a2.T @ g.reshape(-1, b.shape[1])
        return ga, gb

    return Tensor.from_op(a.data @ b.data, (a, b), back, "matmul")


def tsum(a: Tensor, axis=None) -> Tensor:
    def back(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Tensor.from_op(np.asarray(a.data.sum(axis=axis)), (a,), back, "sum")


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor.from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)
    return Tensor.from_op(np.transpose(a.data, axes), (a,),
                          lambda g: (np.transpose(g, inv),), "transpose")


def getitem(a: Tensor, index) -> Tensor:
    def back(g):
        out = np.zeros_like(a.data)
        if _fancy(index):
            np.add.at(out, index, g)
        else:
            out[index] = g
        return (out,)

    return Tensor.from_op(np.array(a.data[index]), (a,), back, "getitem")


def _fancy(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def broadcast_to(a: Tensor, shape) -> Tensor:
    """Explicit broadcast; the backward pass sums over the expanded axes."""
    shape = tuple(shape)
    lead = len(shape) - a.ndim

    def back(g):
        g = g.sum(axis=tuple(range(lead))) if lead else g
        keep = tuple(i for i, n in enumerate(a.shape) if n == 1 and g.shape[i] != 1)
        if keep:
            g = g.sum(axis=keep, keepdims=True)
        return (g,)

    try:
        data = np.broadcast_to(a.data, shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return Tensor.from_op(data.copy(), (a,), back, "broadcast")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return Tensor.from_op(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                          lambda g: tuple(np.split(g, cuts, axis=axis)), "concat")


def pad_last(a: Tensor, left: int, right: int) -> Tensor:
    """Zero-pad the last axis."""
    widths = [(0, 0)] * (a.ndim - 1) + [(left, right)]
    n = a.shape[-1]
    return Tensor.from_op(np.pad(a.data, widths), (a,),
                          lambda g: (g[..., left:left + n],), "pad")


def unfold_last(a: Tensor, width: int, stride: int = 1) -> Tensor:
    """Sliding windows over the last axis: ``[..., L] -> [..., L', width]``."""
    n = a.shape[-1]
    if width > n:
        raise ShapeError(f"window {width} longer than input length {n}")
    if stride < 1:
        raise ShapeError("stride must be >= 1")
    windows = np.lib.stride_tricks.sliding_window_view(a.data, width, axis=-1)[..., ::stride, :]
    n_out = windows.shape[-2]
    idx = np.arange(n_out)[:, None] * stride + np.arange(width)[None, :]

    def back(g):
        out = np.zeros_like(a.data)
        np.add.at(out, (..., idx), g)
        return (out,)

    return Tensor.from_op(np.ascontiguousarray(windows), (a,), back, "unfold")


def einsum(spec: str, *operands: Tensor) -> Tensor:
    """Explicit-output einsum. Every input index must appear in the output or
    in another operand (so each operand gradient is itself an einsum)."""
    ins, out = spec.replace(" ", "").split("->")
    ins = ins.split(",")
    if len(ins) != len(operands):
        raise ShapeError(f"einsum {spec!r} expects {len(ins)} operands")
    if "..." in spec:
        ins, out = _expand_ellipsis(ins, out, operands)
        spec = ",".join(ins) + "->" + out
    for i, sub_i in enumerate(ins):
        others = set(out).union(*(set(s) for j, s in enumerate(ins) if j != i))
        if not set(sub_i) <= others:
            raise ShapeError(f"einsum {spec!r}: index only in operand {i} is unsupported")
    try:
        data = np.einsum(spec, *(t.data for t in operands))
    except ValueError as exc:
        raise ShapeError(f"einsum {spec!r}: {exc}") from None

    def back(g):
        grads = []
        for i, t in enumerate(operands):
            if not t.requires_grad:
                grads.append(None)
                continue
            rest = [s for j, s in enumerate(ins) if j != i]
            arrays = [o.data for j, o in enumerate(operands) if j != i]
            grads.append(np.einsum(",".join([out] + rest) + "->" + ins[i], g, *arrays))
        return grads

    return Tensor.from_op(np.asarray(data), tuple(operands), back, "einsum")


def _expand_ellipsis(ins, out, operands):
    """Replace '...' with concrete letters so gradient specs can drop them."""
    used = set("".join(ins) + out)
    free = [c for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ" if c not in used]
    n_ell = 0
    for sub_i, t in zip(ins, operands):
        if "..." in sub_i:
            n_ell = max(n_ell, t.ndim - (len(sub_i) - 3))
    letters = "".join(free[:n_ell])
    new_ins = []
    for sub_i, t in zip(ins, operands):
        if "..." in sub_i:
            k = t.ndim - (len(sub_i) - 3)
            sub_i = sub_i.replace("...", letters[n_ell - k:])
        new_ins.append(sub_i)
    return new_ins, out.replace("...", letters)


def conv1d(x: Tensor, weight: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation ``[.., C, L] * [F, C, W] -> [.., F, L']``.

    ``L' = floor((L + 2*padding - W) / stride) + 1``; no kernel flip.
    """
    if weight.ndim != 3 or x.ndim < 2 or x.shape[-2] != weight.shape[1]:
        raise ShapeError(f"conv1d: input {x.shape} incompatible with weight {weight.shape}")
    if padding:
        x = pad_last(x, padding, padding)
    cols = unfold_last(x, weight.shape[2], stride)       # [.., C, L', W]
    return einsum("...clw,fcw->...fl", cols, weight)


def _topo(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` for every reachable leaf."""
    if loss.size != 1 or loss.ndim != 0:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any trainable tensor")
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topo(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = pg if key not in grads else grads[key] + pg


def parameters_of(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]


def numerical_grad(fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar-valued ``fn`` w.r.t. ``param``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn().item()
            flat[i] = orig - h
            dn = fn().item()
            flat[i] = orig
            gflat[i] = (up - dn) / (2 * h)
    return grad


def gradcheck(fn: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-5,
              floor: float = 1e-5) -> float:
    """Worst elementwise relative error between backprop and finite differences.

    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    gradients that are zero up to rounding from dominating the ratio.
    """
    for p in params:
        p.grad = None
    backward(fn())
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numerical_grad(fn, p, h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        worst = max(worst, float(np.max(np.abs(analytic - numeric) / denom)))
    return worst
