"""GARCH(1,1) conditional volatility: filter, Gaussian MLE fit, simulation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import ConvergenceError, DegenerateInputError, DomainError

TRADING_DAYS = 252
MIN_FIT_LENGTH = 100
# Multi-start grid over (alpha, beta); omega is variance-targeted at each start.
START_GRID = tuple((a, b) for a in (0.02, 0.05, 0.1, 0.2) for b in (0.5, 0.7, 0.85, 0.93)
                   if a + b < 0.99)
MAX_ITER = 4000


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float

    def validate(self) -> "GarchParams":
        if not self.omega > 0:
            raise DomainError("omega must be > 0")
        if self.alpha < 0 or self.beta < 0:
            raise DomainError("alpha and beta must be >= 0")
        if not self.alpha + self.beta < 1:
            raise DomainError("alpha + beta must be < 1 for stationarity")
        return self

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


@dataclass(frozen=True)
class VolSeries:
    dates: tuple
    sigma: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.sigma):
            raise DomainError("dates and sigma lengths differ")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise DomainError("dates must be strictly increasing")
        if np.any(np.asarray(self.sigma) <= 0):
            raise DomainError("volatility must be positive")


def garch_filter(p: GarchParams, returns) -> np.ndarray:
    """Conditional variances s2[t] = omega + alpha*e[t-1]^2 + beta*s2[t-1].

    ``s2[0]`` is the sample variance of ``returns``; the returns are used
    as the innovations directly, so pass demeaned data if the mean matters.
    """
    p.validate()
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.size < 2:
        raise DomainError("need at least two returns")
    return _filter(p.omega, p.alpha, p.beta, r, float(np.var(r)))


def _filter(omega, alpha, beta, r, s0):
    drive = omega + alpha * r[:-1] ** 2
    rest, _ = lfilter([1.0], [1.0, -beta], drive, zi=[beta * s0])
    return np.concatenate(([s0], rest))


def log_likelihood(p: GarchParams, returns) -> float:
    """Gaussian log-likelihood up to the constant -n/2 log(2 pi)."""
    r = np.asarray(returns, dtype=float)
    s2 = _filter(p.omega, p.alpha, p.beta, r, float(np.var(r)))
    return -0.5 * float(np.sum(np.log(s2) + r * r / s2))


def _to_params(u, scale):
    persistence = 1.0 / (1.0 + math.exp(-u[1]))
    share = 1.0 / (1.0 + math.exp(-u[2]))
    return GarchParams(omega=scale * math.exp(u[0]), alpha=persistence * share,
                       beta=persistence * (1.0 - share))


def _from_params(p: GarchParams, scale):
    pers = p.alpha + p.beta
    share = p.alpha / pers
    return np.array([math.log(p.omega / scale), math.log(pers / (1 - pers)),
                     math.log(share / (1 - share))])


def garch_fit(returns) -> GarchParams:
    """Gaussian MLE via Nelder-Mead on an unconstrained reparameterization.

    omega = var * exp(u0), alpha + beta = logistic(u1), alpha share =
    logistic(u2). Starts from every point of ``START_GRID`` and keeps the
    best; the answer never scores below any start point.
    """
    r = np.asarray(returns, dtype=float)
    if r.ndim != 1 or r.size < MIN_FIT_LENGTH:
        raise DomainError(f"garch_fit needs at least {MIN_FIT_LENGTH} returns")
    var = float(np.var(r))
    if not var > 0:
        raise DegenerateInputError("returns are constant")
    s0 = var

    def nll(u):
        if np.any(np.abs(u) > 50):
            return np.inf
        p = _to_params(u, var)
        s2 = _filter(p.omega, p.alpha, p.beta, r, s0)
        return 0.5 * float(np.sum(np.log(s2) + r * r / s2))

    best_p, best_ll, any_converged = None, -np.inf, False
    for a, b in START_GRID:
        start = GarchParams(var * (1 - a - b), a, b)
        res = minimize(nll, _from_params(start, var), method="Nelder-Mead",
                       options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": MAX_ITER,
                                "maxfev": 2 * MAX_ITER})
        any_converged |= bool(res.success)
        cand = _to_params(res.x, var)
        for p in (cand, start):
            ll = log_likelihood(p, r)
            if ll > best_ll:
                best_p, best_ll = p, ll
    if not any_converged:
        raise ConvergenceError("no Nelder-Mead start converged", best=best_p)
    return best_p


def simulate_garch(p: GarchParams, n: int, seed: int, burn: int = 500) -> np.ndarray:
    """Gaussian GARCH(1,1) returns, started at the unconditional variance."""
    p.validate()
    z = np.random.default_rng(seed).standard_normal(n + burn)
    out = np.empty(n + burn)
    s2 = p.unconditional_variance
    for t in range(n + burn):
        out[t] = math.sqrt(s2) * z[t]
        s2 = p.omega + p.alpha * out[t] ** 2 + p.beta * s2
    return out[burn:]


def annualize(daily_sigma, trading_days: int = TRADING_DAYS):
    if np.any(np.asarray(daily_sigma) < 0):
        raise DomainError("volatility must be >= 0")
    return daily_sigma * math.sqrt(trading_days)


def volatility_series(dates, returns, params: GarchParams | None = None,
                      trading_days: int = TRADING_DAYS) -> tuple[GarchParams, VolSeries]:
    """Fit (unless given) and filter; ``returns[t]`` is the return ending on ``dates[t]``.

    The variance for ``dates[t]`` is the one-step forecast made after
    observing ``returns[t]``, so each date only uses information up to
    its own close.
    """
    r = np.asarray(returns, dtype=float)
    r = r - r.mean()
    params = params or garch_fit(r)
    s2 = garch_filter(params, r)
    next_var = params.omega + params.alpha * r ** 2 + params.beta * s2
    return params, VolSeries(tuple(dates), annualize(np.sqrt(next_var), trading_days))
