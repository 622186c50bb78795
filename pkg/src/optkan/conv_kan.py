"""1D KAN convolution and the Conv-KAN regressor.

A kernel of width W holds one learnable edge function per tap; the output
at position j is ``sum_c sum_k phi_{c,k}(a_{c, j*stride + k})``. A bank of
``F`` filters stacks ``F`` such kernels, each owning its own edges for every
input channel.
"""
from __future__ import annotations

import math

import numpy as np

from .autograd import Tensor, clamp, einsum, reshape, silu, unfold_last
from .errors import ShapeError
from .kan import SplineBasis, spline_basis
from .nn import MLPHead, Module


class KanConvKernel1d(Module):
    def __init__(self, in_channels: int, width: int, n_filters: int = 1, stride: int = 1,
                 basis: SplineBasis | None = None, rng: np.random.Generator | None = None,
                 w_spline: float = 1.0, w_silu: float = 1.0, coeff_std: float = 0.1,
                 fan_in_scale: bool = False):
        if width < 1 or stride < 1:
            raise ShapeError("kernel width and stride must be >= 1")
        if fan_in_scale:
            w_spline, w_silu = (w / math.sqrt(in_channels * width) for w in (w_spline, w_silu))
        rng = rng or np.random.default_rng(0)
        self.basis = basis or SplineBasis()
        self.in_channels, self.width = in_channels, width
        self.n_filters, self.stride = n_filters, stride
        shape = (n_filters, in_channels, width)
        self.coeffs = Tensor(rng.normal(0.0, coeff_std, size=shape + (self.basis.n_basis,)),
                             requires_grad=True)
        self.w_spline = Tensor(np.full(shape, w_spline), requires_grad=True)
        self.w_silu = Tensor(np.full(shape, w_silu), requires_grad=True)

    def out_length(self, length: int) -> int:
        if self.width > length:
            raise ShapeError(f"kernel width {self.width} exceeds input length {length}")
        return (length - self.width) // self.stride + 1

    def forward(self, x: Tensor) -> Tensor:
        return kan_conv1d(x, self)


def kan_conv1d(x: Tensor, kernel: KanConvKernel1d) -> Tensor:
    """``[..., C, L] -> [..., F, L']``."""
    if x.ndim < 2 or x.shape[-2] != kernel.in_channels:
        raise ShapeError(f"expected [..., {kernel.in_channels}, L] input, got {x.shape}")
    kernel.out_length(x.shape[-1])
    b = kernel.basis
    cols = unfold_last(x, kernel.width, kernel.stride)                  # [..., C, L', W]
    basis = spline_basis(clamp(cols, b.g_min, b.g_max), b)              # [..., C, L', W, n]
    spline_part = einsum("...clwn,fcwn,fcw->...fl", basis, kernel.coeffs, kernel.w_spline)
    silu_part = einsum("...clw,fcw->...fl", silu(cols), kernel.w_silu)
    return spline_part + silu_part


class ConvKanModel(Module):
    """KAN convolution banks over the feature axis, then an affine+SiLU head.

    Input ``[B, C, N, D]``: the ``C*N`` (channel, observation) rows act as
    convolution channels and the kernel slides along the ``D`` features.
    """

    kind = "conv_kan"

    def __init__(self, channels: int, observations: int, features: int,
                 filters: list[int] = (4,), width: int = 3, stride: int = 1,
                 head_hidden: list[int] = (16,), basis: SplineBasis | None = None,
                 rng: np.random.Generator | None = None, edge_w_silu: float = 1.0,
                 fan_in_scale: bool = False):
        rng = rng or np.random.default_rng(0)
        self.channels, self.observations, self.features = channels, observations, features
        self.conv_layers = []
        c_in, length = channels * observations, features
        for f in filters:
            k = KanConvKernel1d(c_in, width, f, stride, basis, rng, w_silu=edge_w_silu,
                                fan_in_scale=fan_in_scale)
            length = k.out_length(length)
            self.conv_layers.append(k)
            c_in = f
        self.flat_width = c_in * length
        self.head = MLPHead([self.flat_width, *head_hidden, 1], rng)

    def prepare(self, features: np.ndarray) -> Tensor:
        return Tensor(features)

    def forward(self, batch: Tensor) -> Tensor:
        return conv_kan_forward(self, batch)


def conv_kan_forward(m: ConvKanModel, batch: Tensor) -> Tensor:
    expected = (m.channels, m.observations, m.features)
    if batch.ndim != 4 or batch.shape[1:] != expected:
        raise ShapeError(f"expected batch [B, {m.channels}, {m.observations}, {m.features}], "
                         f"got {batch.shape}")
    n = batch.shape[0]
    x = reshape(batch, (n, m.channels * m.observations, m.features))
    for k in m.conv_layers:
        x = kan_conv1d(x, k)
    return m.head(reshape(x, (n, m.flat_width)))
