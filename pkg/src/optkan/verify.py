"""Stochastic and PDE-based cross-checks of the analytic pricer.

Random numbers come from numpy's PCG64 bit generator; each block of
``BLOCK_PATHS`` antithetic pairs gets its own child seed spawned from the
master seed via ``SeedSequence``, so results do not depend on how blocks
are scheduled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DomainError
from .pricing import MarketParams, OptionKind, payoff, price_bsm

BLOCK_PATHS = 1 << 18


@dataclass(frozen=True)
class GbmSpec:
    initial: float
    drift: float
    volatility: float
    horizon: float
    steps: int = 1

    def __post_init__(self):
        if self.steps < 1:
            raise DomainError("steps must be >= 1")
        if self.horizon <= 0:
            raise DomainError("horizon must be > 0")
        if self.initial <= 0:
            raise DomainError("initial price must be > 0")
        if self.volatility < 0:
            raise DomainError("volatility must be >= 0")


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    paths: int


def _normal_blocks(n: int, seed: int):
    """Yield standard-normal blocks totalling ``n`` draws, block-seeded."""
    n_blocks = -(-n // BLOCK_PATHS)
    children = np.random.SeedSequence(seed).spawn(n_blocks)
    remaining = n
    for child in children:
        size = min(BLOCK_PATHS, remaining)
        yield np.random.Generator(np.random.PCG64(child)).standard_normal(size)
        remaining -= size


def _terminal(initial, drift, vol, horizon, z):
    return initial * np.exp((drift - 0.5 * vol * vol) * horizon + vol * math.sqrt(horizon) * z)


def simulate_gbm_terminal(spec: GbmSpec, n_paths: int, seed: int) -> np.ndarray:
    """Terminal prices from the exact log-normal solution (no time stepping)."""
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    z = np.concatenate(list(_normal_blocks(n_paths, seed)))
    return _terminal(spec.initial, spec.drift, spec.volatility, spec.horizon, z)


def mc_price(p: MarketParams, kind, n_paths: int, seed: int,
             antithetic: bool = True) -> McEstimate:
    """Risk-neutral Monte-Carlo price with drift r - q.

    With ``antithetic`` the estimator averages each (Z, -Z) pair and the
    standard error is taken over pair means; ``n_paths`` counts both legs.
    """
    if n_paths < 2:
        raise DomainError("need at least 2 paths")
    p.validate()
    if p.maturity <= 0:
        raise DomainError("mc_price needs maturity > 0")
    sign = int(OptionKind.parse(kind))
    drift = p.rate - p.dividend_yield
    n_draws = n_paths // 2 if antithetic else n_paths
    total = 0.0
    total_sq = 0.0
    for z in _normal_blocks(n_draws, seed):
        leg = payoff(_terminal(p.spot, drift, p.volatility, p.maturity, z), p.strike, sign)
        if antithetic:
            leg = 0.5 * (leg + payoff(_terminal(p.spot, drift, p.volatility, p.maturity, -z),
                                      p.strike, sign))
        total += float(leg.sum())
        total_sq += float(np.dot(leg, leg))
    disc = math.exp(-p.rate * p.maturity)
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0) * n_draws / (n_draws - 1)
    return McEstimate(mean=disc * mean,
                      std_error=disc * math.sqrt(var / n_draws),
                      paths=2 * n_draws if antithetic else n_draws)


Pricer = Callable[[MarketParams, OptionKind], float]


def payoff_pricer(p: MarketParams, kind) -> float:
    """The exercise payoff viewed as a (time-independent) price surface."""
    return float(payoff(p.spot, p.strike, int(OptionKind.parse(kind))))


def pde_terms(p: MarketParams, kind, dS: float, dt: float,
              pricer: Pricer = price_bsm) -> tuple[float, float, float, float]:
    """The four terms of the dividend-adjusted pricing PDE by central differences.

    Returns ``(f_t, (r - q) S f_S, 0.5 sigma^2 S^2 f_SS, -r f)``. Calendar
    time t runs opposite to maturity, so f_t = -df/dT.
    """
    p.validate()
    if dS <= 0 or dt <= 0:
        raise DomainError("steps must be positive")
    if p.maturity - dt <= 0:
        raise DomainError("time step crosses the expiry boundary")
    if p.spot - dS <= 0:
        raise DomainError("spot step crosses zero")
    kind = OptionKind.parse(kind)
    S = p.spot
    f = pricer(p, kind)
    f_up = pricer(p.with_(spot=S + dS), kind)
    f_dn = pricer(p.with_(spot=S - dS), kind)
    f_later = pricer(p.with_(maturity=p.maturity + dt), kind)
    f_sooner = pricer(p.with_(maturity=p.maturity - dt), kind)
    f_s = (f_up - f_dn) / (2 * dS)
    f_ss = (f_up - 2 * f + f_dn) / (dS * dS)
    f_t = -(f_later - f_sooner) / (2 * dt)
    return (float(f_t), float((p.rate - p.dividend_yield) * S * f_s),
            float(0.5 * p.volatility ** 2 * S * S * f_ss), float(-p.rate * f))


def pde_residual(p: MarketParams, kind, dS: float, dt: float,
                 pricer: Pricer = price_bsm) -> float:
    """f_t + (r - q) S f_S + 0.5 sigma^2 S^2 f_SS - r f; zero for an exact price."""
    return float(sum(pde_terms(p, kind, dS, dt, pricer)))


def pde_scale(p: MarketParams, kind, dS: float, dt: float,
              pricer: Pricer = price_bsm) -> float:
    """Magnitude of the largest PDE term, the natural unit for a residual."""
    return max(abs(t) for t in pde_terms(p, kind, dS, dt, pricer))


# --- verification suites used by the ``verify`` subcommand -------------------

MC_ABS_FLOOR = 1e-10


@dataclass
class CheckResult:
    name: str
    measured: float
    threshold: float
    passed: bool
    detail: str = ""


def parameter_grid(n: int, seed: int) -> list[MarketParams]:
    rng = np.random.default_rng(seed)
    return [MarketParams(spot=float(rng.uniform(50, 150)), strike=float(rng.uniform(50, 150)),
                         rate=float(rng.uniform(0.0, 0.08)),
                         dividend_yield=float(rng.uniform(0.0, 0.05)),
                         volatility=float(rng.uniform(0.1, 0.5)),
                         maturity=float(rng.uniform(0.1, 2.0)))
            for _ in range(n)]


def parity_check(n: int = 1000, seed: int = 7) -> CheckResult:
    from .pricing import parity_residual, price_bs
    worst_parity = 0.0
    worst_q0 = 0.0
    for p in parameter_grid(n, seed):
        worst_parity = max(worst_parity, abs(parity_residual(p)))
        p0 = p.with_(dividend_yield=0.0)
        for k in OptionKind:
            worst_q0 = max(worst_q0, abs(price_bs(p, k) - price_bsm(p0, k)))
    return CheckResult("put-call parity", worst_parity, 1e-10,
                       worst_parity < 1e-10 and worst_q0 < 1e-12,
                       f"max |bs - bsm(q=0)| = {worst_q0:.3e}")


def mc_checks(n_points: int = 10, n_paths: int = 1_000_000, seed: int = 11) -> list[CheckResult]:
    out = []
    for i, p in enumerate(parameter_grid(n_points, seed)):
        for k in OptionKind:
            est = mc_price(p, k, n_paths, seed + 1000 * i + int(k))
            gap = abs(price_bsm(p, k) - est.mean)
            # floor covers deep OTM points where no path pays and se == 0
            tol = 3 * est.std_error + MC_ABS_FLOOR
            out.append(CheckResult(f"mc {k.name.lower()} #{i}", gap, tol, gap < tol,
                                   f"mc={est.mean:.6f} se={est.std_error:.2e}"))
    return out


def pde_grid(n_side: int = 5) -> list[MarketParams]:
    """Interior (spot, maturity) points around K = 100; all spots in the money for calls."""
    spots = np.linspace(105.0, 140.0, n_side)
    mats = np.linspace(0.25, 1.5, n_side)
    return [MarketParams(spot=float(s), strike=100.0, rate=0.05, dividend_yield=0.02,
                         volatility=0.25, maturity=float(t))
            for s in spots for t in mats]


def pde_check(negative_control: bool = False, dS_rel: float = 1e-3,
              dt: float = 1e-5) -> CheckResult:
    """Compare PDE residuals of the analytic price against the payoff surface.

    Passes when max |residual(analytic)| is at least 100x below
    max |residual(payoff)| over the grid. With ``negative_control`` the roles
    flip: the payoff surface itself is judged against the analytic
    tolerance, which must fail.
    """
    grid = pde_grid()
    analytic = max(abs(pde_residual(p, OptionKind.CALL, dS_rel * p.spot, dt)) for p in grid)
    raw = max(abs(pde_residual(p, OptionKind.CALL, dS_rel * p.spot, dt, pricer=payoff_pricer))
              for p in grid)
    if negative_control:
        tol = max(1e-5 * p.rate * price_bsm(p, OptionKind.CALL) for p in grid)
        return CheckResult("pde residual (payoff, negative control)", raw, tol, raw < tol)
    return CheckResult("pde residual", analytic, raw / 100, analytic * 100 <= raw,
                       f"payoff residual = {raw:.3e}")
