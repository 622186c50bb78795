"""Closed-form European option prices (Black-Scholes and Black-Scholes-Merton).

Scalar entry points take a :class:`MarketParams`; the ``bsm_*`` array
functions accept numpy arrays and are what the pipeline and benchmark use.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr

from .errors import BoundaryError, DomainError


class OptionKind(enum.IntEnum):
    """Call/put flag. The integer value is the payoff sign (+1 / -1)."""

    CALL = 1
    PUT = -1

    @classmethod
    def parse(cls, value) -> "OptionKind":
        if isinstance(value, OptionKind):
            return value
        if isinstance(value, str):
            key = value.strip().lower()
            if key in ("call", "c", "+1", "1"):
                return cls.CALL
            if key in ("put", "p", "-1"):
                return cls.PUT
            raise DomainError(f"unknown option kind {value!r}")
        return cls(int(value))


@dataclass(frozen=True)
class MarketParams:
    spot: float
    strike: float
    rate: float = 0.0
    dividend_yield: float = 0.0
    volatility: float = 0.2
    maturity: float = 1.0

    def validate(self) -> "MarketParams":
        vals = (self.spot, self.strike, self.rate, self.dividend_yield,
                self.volatility, self.maturity)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite market parameter in {self}")
        if self.spot <= 0 or self.strike <= 0:
            raise DomainError("spot and strike must be positive")
        if self.maturity < 0:
            raise DomainError("maturity must be >= 0")
        if self.dividend_yield < 0:
            raise DomainError("dividend yield must be >= 0")
        if self.maturity > 0 and self.volatility <= 0:
            raise DomainError("volatility must be positive when maturity > 0")
        return self

    def with_(self, **changes) -> "MarketParams":
        return replace(self, **changes)


def std_normal_cdf(x):
    """Standard normal CDF. Accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("std_normal_cdf needs finite input")
    out = ndtr(arr)
    return float(out) if out.ndim == 0 else out


def std_normal_pdf(x):
    return np.exp(-0.5 * np.square(x)) / math.sqrt(2.0 * math.pi)


def d1_d2(p: MarketParams) -> tuple[float, float]:
    p.validate()
    if p.maturity == 0:
        raise BoundaryError("d1/d2 undefined at maturity 0; use the payoff")
    d1, d2 = bsm_d1_d2(p.spot, p.strike, p.rate, p.dividend_yield,
                       p.volatility, p.maturity)
    return float(d1), float(d2)


def bsm_d1_d2(spot, strike, rate, q, vol, ttm):
    """Vectorized d1, d2. Caller guarantees ttm > 0."""
    vol_sqrt_t = vol * np.sqrt(ttm)
    d1 = (np.log(spot / strike) + (rate - q + 0.5 * vol * vol) * ttm) / vol_sqrt_t
    return d1, d1 - vol_sqrt_t


def payoff(spot, strike, kind):
    sign = np.asarray(kind, dtype=float)
    return np.maximum(sign * (np.asarray(spot, dtype=float) - strike), 0.0)


def bsm_price_array(spot, strike, rate, q, vol, ttm, kind):
    """Black-Scholes-Merton price over broadcastable arrays.

    ``kind`` is +1 for calls and -1 for puts. Entries with ``ttm == 0``
    return the exercise payoff.
    """
    spot, strike, rate, q, vol, ttm, sign = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (spot, strike, rate, q, vol, ttm, kind)))
    expired = ttm == 0
    if np.any(ttm < 0):
        raise DomainError("maturity must be >= 0")
    if np.any((spot <= 0) | (strike <= 0)):
        raise DomainError("spot and strike must be positive")
    if np.any(~expired & (vol <= 0)):
        raise DomainError("volatility must be positive when maturity > 0")
    t = np.where(expired, 1.0, ttm)
    v = np.where(expired, 1.0, vol)
    d1, d2 = bsm_d1_d2(spot, strike, rate, q, v, t)
    fwd = spot * np.exp(-q * t)
    disc = strike * np.exp(-rate * t)
    price = sign * (fwd * ndtr(sign * d1) - disc * ndtr(sign * d2))
    price = np.maximum(price, 0.0)
    price = np.where(expired, payoff(spot, strike, sign), price)
    return float(price) if price.ndim == 0 else price


def bsm_delta_array(spot, strike, rate, q, vol, ttm, kind):
    """e^{-qT} N(d1) for calls, -e^{-qT} N(-d1) for puts (ttm > 0).

    The put form avoids the cancellation in N(d1) - 1 that rounds deep
    out-of-the-money put deltas to exactly zero.
    """
    sign = np.asarray(kind, dtype=float)
    d1, _ = bsm_d1_d2(np.asarray(spot, float), strike, rate, q, vol, ttm)
    disc_q = np.exp(-np.asarray(q, float) * ttm)
    return np.where(sign > 0, disc_q * ndtr(d1), -disc_q * ndtr(-d1))


def price_bsm(p: MarketParams, kind) -> float:
    p.validate()
    kind = OptionKind.parse(kind)
    return bsm_price_array(p.spot, p.strike, p.rate, p.dividend_yield,
                           p.volatility, p.maturity, int(kind))


def price_bs(p: MarketParams, kind) -> float:
    """Black-Scholes price: the dividend yield in ``p`` is ignored."""
    return price_bsm(p.with_(dividend_yield=0.0), kind)


def parity_residual(p: MarketParams) -> float:
    """call - put - (S e^{-qT} - K e^{-rT}); zero up to rounding."""
    c = price_bsm(p, OptionKind.CALL)
    put = price_bsm(p, OptionKind.PUT)
    fwd = p.spot * math.exp(-p.dividend_yield * p.maturity)
    return c - put - (fwd - p.strike * math.exp(-p.rate * p.maturity))
