"""LSTM baseline and the 1D convolutional LSTM with peephole connections.

Gate blocks are fused in the order (i, f, c, o) along the output axis of
each weight; :meth:`gate` slices one block back out.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autograd import Tensor, broadcast_to, conv1d, matmul, mul, reshape, sigmoid, tanh
from .errors import ShapeError
from .nn import Linear, Module

GATES = ("i", "f", "c", "o")
INIT_RANGE = 0.08


@dataclass
class LstmState:
    hidden: Tensor
    cell: Tensor

    def __post_init__(self):
        if self.hidden.shape != self.cell.shape:
            raise ShapeError(f"hidden {self.hidden.shape} and cell {self.cell.shape} differ")


def _uniform(rng, shape):
    return Tensor(rng.uniform(-INIT_RANGE, INIT_RANGE, size=shape), requires_grad=True)


def _forget_bias(rng, hidden, extra=()):
    b = rng.uniform(-INIT_RANGE, INIT_RANGE, size=(4 * hidden,) + extra)
    b[hidden:2 * hidden] = 1.0
    return Tensor(b, requires_grad=True)


class LstmCell(Module):
    """Dense LSTM cell: x [B, n_in], state [B, H]."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        self.n_in, self.hidden = n_in, hidden
        self.w_x = _uniform(rng, (n_in, 4 * hidden))
        self.w_h = _uniform(rng, (hidden, 4 * hidden))
        self.bias = _forget_bias(rng, hidden)

    def zero_state(self, batch: int) -> LstmState:
        z = np.zeros((batch, self.hidden))
        return LstmState(Tensor(z), Tensor(z.copy()))


class ConvLstmCell(Module):
    """1D Conv-LSTM cell: x [B, C, D], state [B, F, D].

    Recurrent and input convolutions use same-padding (odd width) so the
    state keeps its shape; peephole weights are [F, D] Hadamard factors.
    """

    def __init__(self, in_channels: int, hidden_channels: int, length: int, width: int,
                 rng: np.random.Generator):
        if width % 2 != 1:
            raise ShapeError("same-padding needs an odd kernel width")
        self.in_channels, self.hidden, self.length, self.width = (
            in_channels, hidden_channels, length, width)
        f = hidden_channels
        self.w_x = _uniform(rng, (4 * f, in_channels, width))
        self.w_h = _uniform(rng, (4 * f, f, width))
        self.w_ci = _uniform(rng, (f, length))
        self.w_cf = _uniform(rng, (f, length))
        self.w_co = _uniform(rng, (f, length))
        self.bias = _forget_bias(rng, f, (1,))

    def zero_state(self, batch: int) -> LstmState:
        z = np.zeros((batch, self.hidden, self.length))
        return LstmState(Tensor(z), Tensor(z.copy()))


def gate(pre: Tensor, k: int, size: int, axis: int) -> Tensor:
    index = [slice(None)] * pre.ndim
    index[axis] = slice(k * size, (k + 1) * size)
    return pre[tuple(index)]


def lstm_step(p: LstmCell, x: Tensor, s: LstmState) -> LstmState:
    if x.shape[-1] != p.n_in or s.hidden.shape[-1] != p.hidden:
        raise ShapeError(f"lstm_step: input {x.shape} / state {s.hidden.shape} "
                         f"do not match cell ({p.n_in} -> {p.hidden})")
    pre = matmul(x, p.w_x) + matmul(s.hidden, p.w_h)
    pre = pre + broadcast_to(p.bias, pre.shape)
    h = p.hidden
    i = sigmoid(gate(pre, 0, h, -1))
    f = sigmoid(gate(pre, 1, h, -1))
    g = tanh(gate(pre, 2, h, -1))
    o = sigmoid(gate(pre, 3, h, -1))
    c = f * s.cell + i * g
    return LstmState(o * tanh(c), c)


def conv_lstm_step(p: ConvLstmCell, x: Tensor, s: LstmState) -> LstmState:
    """One step of the peephole Conv-LSTM recursion.

    i = sig(Wxi*X + Whi*H + Wci o C_prev + bi)
    f = sig(Wxf*X + Whf*H + Wcf o C_prev + bf)
    C = f o C_prev + i o tanh(Wxc*X + Whc*H + bc)
    o = sig(Wxo*X + Who*H + Wco o C + bo)
    H = o o tanh(C)
    """
    if x.ndim != 3 or x.shape[1:] != (p.in_channels, p.length):
        raise ShapeError(f"conv_lstm_step: input {x.shape} does not match "
                         f"[B, {p.in_channels}, {p.length}]")
    if s.cell.shape != (x.shape[0], p.hidden, p.length):
        raise ShapeError(f"conv_lstm_step: state {s.cell.shape} does not match cell")
    pad = p.width // 2
    pre = conv1d(x, p.w_x, padding=pad) + conv1d(s.hidden, p.w_h, padding=pad)
    pre = pre + broadcast_to(p.bias, pre.shape)
    n = p.hidden
    shape = s.cell.shape
    c_prev = s.cell
    i = sigmoid(gate(pre, 0, n, 1) + mul(broadcast_to(p.w_ci, shape), c_prev))
    f = sigmoid(gate(pre, 1, n, 1) + mul(broadcast_to(p.w_cf, shape), c_prev))
    c = f * c_prev + i * tanh(gate(pre, 2, n, 1))
    o = sigmoid(gate(pre, 3, n, 1) + mul(broadcast_to(p.w_co, shape), c))
    return LstmState(o * tanh(c), c)


class LstmModel(Module):
    kind = "lstm"

    def __init__(self, n_features: int, hidden: int, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.cell = LstmCell(n_features, hidden, rng)
        self.readout = Linear(hidden, 1, rng, scale=INIT_RANGE)
        self.readout.bias.data[:] = rng.uniform(-INIT_RANGE, INIT_RANGE, size=1)

    def prepare(self, features: np.ndarray) -> Tensor:
        """``[S, C, N, D]`` windows -> ``[S, N, C, D]`` sequences."""
        return Tensor(np.ascontiguousarray(features.transpose(0, 2, 1, 3)))

    def forward(self, batch: Tensor) -> Tensor:
        return sequence_forward(self, batch)


class ConvLstmModel(Module):
    kind = "conv_lstm"

    def __init__(self, channels: int, features: int, hidden_channels: int = 4,
                 width: int = 3, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.cell = ConvLstmCell(channels, hidden_channels, features, width, rng)
        self.readout = Linear(hidden_channels * features, 1, rng, scale=INIT_RANGE)
        self.readout.bias.data[:] = rng.uniform(-INIT_RANGE, INIT_RANGE, size=1)

    def prepare(self, features: np.ndarray) -> Tensor:
        """``[S, C, N, D]`` windows -> ``[S, N, C, D]`` sequences."""
        return Tensor(np.ascontiguousarray(features.transpose(0, 2, 1, 3)))

    def forward(self, batch: Tensor) -> Tensor:
        return sequence_forward(self, batch)


def sequence_forward(model, batch: Tensor) -> Tensor:
    """Unroll over ``[B, T_w, C, D]`` from a zero state; affine readout of the last H."""
    if batch.ndim != 4 or batch.shape[1] < 1:
        raise ShapeError(f"expected [B, T_w, C, D] with T_w >= 1, got {batch.shape}")
    n, steps, c, d = batch.shape
    cell = model.cell
    state = cell.zero_state(n)
    for t in range(steps):
        x_t = batch[:, t]
        if isinstance(cell, ConvLstmCell):
            state = conv_lstm_step(cell, x_t, state)
        else:
            state = lstm_step(cell, reshape(x_t, (n, c * d)), state)
    return model.readout(reshape(state.hidden, (n, -1)))
