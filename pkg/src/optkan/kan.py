"""Kolmogorov-Arnold layers with B-spline + SiLU edge functions.

Each edge computes ``phi(x) = w_spline * spline(x) + w_silu * silu(x)``.
The spline lives on a uniform grid of ``intervals`` cells over
``[g_min, g_max]``, extended by ``order`` knots on each side so the
``intervals + order`` basis functions sum to one everywhere on the range.
Inputs outside the range are clamped for the spline term only.
"""
from __future__ import annotations

import math

from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor, clamp, einsum, silu
from .errors import DomainError, ShapeError
from .nn import Module


@dataclass(frozen=True)
class SplineBasis:
    intervals: int = 5
    order: int = 3
    g_min: float = -1.5
    g_max: float = 1.5
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.intervals < 1:
            raise DomainError("need at least one grid interval")
        if self.order < 0:
            raise DomainError("spline order must be >= 0")
        if not self.g_max > self.g_min:
            raise DomainError("grid range must be increasing")
        h = (self.g_max - self.g_min) / self.intervals
        j = np.arange(-self.order, self.intervals + self.order + 1)
        object.__setattr__(self, "knots", self.g_min + j * h)

    @property
    def n_basis(self) -> int:
        return self.intervals + self.order

    def values(self, x: np.ndarray) -> np.ndarray:
        """Basis matrix ``[..., n_basis]`` for raw (unclamped) ``x``."""
        return _cox_de_boor(np.asarray(x, dtype=float), self.knots, self.order)[0]

    def values_and_derivs(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _cox_de_boor(np.asarray(x, dtype=float), self.knots, self.order)


def _cox_de_boor(x, t, k):
    """Vectorized Cox-de Boor recurrence; also returns d/dx of the top level."""
    x = x[..., None]
    b = ((x >= t[:-1]) & (x < t[1:])).astype(float)
    b[..., -1] += x[..., 0] == t[-1]      # close the last interval on the right
    deriv = np.zeros_like(b)
    for d in range(1, k + 1):
        left = t[d:-1] - t[:-d - 1]
        right = t[d + 1:] - t[1:-d]
        lo, hi = b[..., :-1], b[..., 1:]
        if d == k:
            deriv = d * (lo / left - hi / right)
        b = (x - t[:-d - 1]) / left * lo + (t[d + 1:] - x) / right * hi
    return b, deriv


def spline_basis(x: Tensor, basis: SplineBasis) -> Tensor:
    """Differentiable basis evaluation: ``[...] -> [..., n_basis]``."""
    vals, ders = basis.values_and_derivs(x.data)
    return Tensor.from_op(vals, (x,), lambda g: ((g * ders).sum(axis=-1),), "bspline")


def spline_eval(basis: SplineBasis, coeffs, x):
    """sum_i c_i B_i(x) with x clamped to the grid range."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape[-1] != basis.n_basis:
        raise ShapeError(f"expected {basis.n_basis} coefficients, got {coeffs.shape[-1]}")
    xc = np.clip(np.asarray(x, dtype=float), basis.g_min, basis.g_max)
    out = basis.values(xc) @ coeffs
    return float(out) if np.ndim(out) == 0 else out


class KanEdge(Module):
    """A single learnable univariate function."""

    def __init__(self, basis: SplineBasis, coeffs=None, w_spline: float = 1.0,
                 w_silu: float = 1.0, rng: np.random.Generator | None = None):
        self.basis = basis
        if coeffs is None:
            rng = rng or np.random.default_rng(0)
            coeffs = rng.normal(0.0, 0.1, size=basis.n_basis)
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (basis.n_basis,):
            raise ShapeError(f"edge needs {basis.n_basis} coefficients, got {coeffs.shape}")
        self.coeffs = Tensor(coeffs, requires_grad=True)
        self.w_spline = Tensor(w_spline, requires_grad=True)
        self.w_silu = Tensor(w_silu, requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return edge_forward(self, x)


def edge_forward(e: KanEdge, x: Tensor) -> Tensor:
    b = e.basis
    spline = einsum("...n,n->...", spline_basis(clamp(x, b.g_min, b.g_max), b), e.coeffs)
    return e.w_spline * spline + e.w_silu * silu(x)


class KanLayer(Module):
    """Dense ``n_out x n_in`` grid of edges; output_i = sum_p phi_ip(x_p).

    Edge parameters are stored stacked: ``coeffs[i, p, :]``,
    ``w_spline[i, p]``, ``w_silu[i, p]``.
    """

    def __init__(self, n_in: int, n_out: int, basis: SplineBasis | None = None,
                 rng: np.random.Generator | None = None, w_spline: float = 1.0,
                 w_silu: float = 1.0, coeff_std: float = 0.1, fan_in_scale: bool = False):
        if n_in < 1 or n_out < 1:
            raise ShapeError("layer widths must be positive")
        self.basis = basis or SplineBasis()
        rng = rng or np.random.default_rng(0)
        self.n_in, self.n_out = n_in, n_out
        if fan_in_scale:
            # keeps the summed output O(1) however many edges feed a node
            w_spline, w_silu = w_spline / math.sqrt(n_in), w_silu / math.sqrt(n_in)
        self.coeffs = Tensor(rng.normal(0.0, coeff_std, size=(n_out, n_in, self.basis.n_basis)),
                             requires_grad=True)
        self.w_spline = Tensor(np.full((n_out, n_in), w_spline), requires_grad=True)
        self.w_silu = Tensor(np.full((n_out, n_in), w_silu), requires_grad=True)

    def edge(self, i: int, p: int) -> KanEdge:
        """Detached copy of edge (output i, input p)."""
        return KanEdge(self.basis, self.coeffs.data[i, p].copy(),
                       float(self.w_spline.data[i, p]), float(self.w_silu.data[i, p]))

    def forward(self, x: Tensor) -> Tensor:
        return layer_forward(self, x)


def layer_forward(layer: KanLayer, x: Tensor) -> Tensor:
    if x.ndim < 1 or x.shape[-1] != layer.n_in:
        raise ShapeError(f"KAN layer expects width {layer.n_in}, got input {x.shape}")
    b = layer.basis
    basis = spline_basis(clamp(x, b.g_min, b.g_max), b)            # [..., p, n]
    spline_part = einsum("...pn,ipn,ip->...i", basis, layer.coeffs, layer.w_spline)
    silu_part = einsum("...p,ip->...i", silu(x), layer.w_silu)
    return spline_part + silu_part


class KanNetwork(Module):
    def __init__(self, widths: list[int], basis: SplineBasis | None = None,
                 rng: np.random.Generator | None = None, **layer_kw):
        if len(widths) < 2:
            raise ShapeError("a KAN needs at least input and output widths")
        rng = rng or np.random.default_rng(0)
        self.widths = list(widths)
        self.layers = [KanLayer(a, b, basis, rng, **layer_kw)
                       for a, b in zip(widths[:-1], widths[1:])]

    def forward(self, x: Tensor) -> Tensor:
        return network_forward(self, x)


def network_forward(net: KanNetwork, x: Tensor) -> Tensor:
    if x.ndim < 1 or x.shape[-1] != net.widths[0]:
        raise ShapeError(f"KAN expects width {net.widths[0]}, got input {x.shape}")
    for layer in net.layers:
        x = layer_forward(layer, x)
    return x


class KanRegressor(Module):
    """KAN over flattened ``[B, C, N, D]`` windows, one scalar output."""

    kind = "kan"

    def __init__(self, n_inputs: int, hidden: list[int] = (8,), basis: SplineBasis | None = None,
                 rng: np.random.Generator | None = None, **layer_kw):
        self.net = KanNetwork([n_inputs, *hidden, 1], basis, rng, **layer_kw)

    def prepare(self, features: np.ndarray) -> Tensor:
        return Tensor(features.reshape(features.shape[0], -1))

    def forward(self, x: Tensor) -> Tensor:
        return network_forward(self.net, x)
