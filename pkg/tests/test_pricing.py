import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from optkan.errors import BoundaryError, DomainError
from optkan.pricing import (MarketParams, OptionKind, bsm_price_array, d1_d2, parity_residual,
                            payoff, price_bs, price_bsm, std_normal_cdf)

ATM = MarketParams(spot=100, strike=100, rate=0.05, dividend_yield=0.0, volatility=0.2, maturity=1)

market = st.builds(
    MarketParams,
    spot=st.floats(1, 500), strike=st.floats(1, 500), rate=st.floats(0, 0.15),
    dividend_yield=st.floats(0, 0.1), volatility=st.floats(0.01, 1.5),
    maturity=st.floats(0.01, 5),
)


def _density(x):
    return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def test_cdf_symmetry_and_tail():
    assert std_normal_cdf(0.0) == 0.5
    assert abs(std_normal_cdf(10.0) - 1.0) <= 1e-15


def test_cdf_matches_quadrature():
    # integrate the density independently of the special-function path
    left, _ = quad(_density, -np.inf, 0.0, epsabs=1e-14)
    mid, _ = quad(_density, 0.0, 1.959964, epsabs=1e-14)
    assert abs((left + mid) - 0.975) < 1e-6
    assert abs(std_normal_cdf(1.959964) - (left + mid)) < 1e-12


def test_cdf_rejects_nan():
    with pytest.raises(DomainError):
        std_normal_cdf(float("nan"))


def test_d1_d2_reference_point():
    d1, d2 = d1_d2(ATM)
    assert d1 == pytest.approx(0.35, abs=1e-14)
    assert d2 == pytest.approx(0.15, abs=1e-14)


def test_d1_d2_at_the_money_forward():
    p = MarketParams(spot=80, strike=80, rate=0.03, dividend_yield=0.03, volatility=0.3,
                     maturity=2.0)
    d1, d2 = d1_d2(p)
    half = 0.3 * math.sqrt(2.0) / 2
    assert d1 == pytest.approx(half, abs=1e-14)
    assert d2 == pytest.approx(-half, abs=1e-14)


def test_d1_linear_in_dividend_yield():
    p = MarketParams(spot=90, strike=100, rate=0.02, dividend_yield=0.01, volatility=0.25,
                     maturity=1.5)
    delta = 0.02
    d1a, _ = d1_d2(p)
    d1b, _ = d1_d2(p.with_(dividend_yield=0.01 + delta))
    assert d1a - d1b == pytest.approx(delta * math.sqrt(1.5) / 0.25, abs=1e-12)


def test_d1_d2_undefined_at_expiry():
    with pytest.raises(BoundaryError):
        d1_d2(ATM.with_(maturity=0.0))


def test_expiry_is_payoff():
    p = MarketParams(spot=120, strike=100, maturity=0.0, volatility=0.0)
    assert price_bsm(p, "call") == 20.0
    assert price_bsm(p, "put") == 0.0


def test_reference_prices():
    # values checked against a 10^7-path antithetic Monte Carlo run
    assert price_bsm(ATM, OptionKind.CALL) == pytest.approx(10.4506, abs=0.005)
    assert price_bs(ATM, OptionKind.PUT) == pytest.approx(5.5735, abs=0.005)


def test_zero_vol_with_time_left_is_domain_error():
    with pytest.raises(DomainError):
        price_bsm(ATM.with_(volatility=0.0), "call")


@pytest.mark.parametrize("field,value", [("spot", 0.0), ("strike", -1.0), ("maturity", -0.1),
                                         ("dividend_yield", -0.01), ("rate", float("inf"))])
def test_invalid_params(field, value):
    with pytest.raises(DomainError):
        price_bsm(ATM.with_(**{field: value}), "call")


def test_deep_in_the_money_call():
    p = MarketParams(spot=1000, strike=100, rate=0.05, volatility=0.01, maturity=0.01)
    assert price_bsm(p, "call") == pytest.approx(1000 - 100 * math.exp(-0.05 * 0.01), abs=1e-6)


def test_kind_parse():
    assert OptionKind.parse("Call") is OptionKind.CALL
    assert OptionKind.parse(-1) is OptionKind.PUT
    with pytest.raises(DomainError):
        OptionKind.parse("straddle")


@settings(max_examples=300, deadline=None)
@given(market)
def test_put_call_parity(p):
    assert abs(parity_residual(p)) < 1e-10 * max(1.0, p.spot, p.strike)


@settings(max_examples=200, deadline=None)
@given(market)
def test_bs_is_bsm_without_dividends(p):
    p0 = p.with_(dividend_yield=0.0)
    for k in OptionKind:
        assert abs(price_bs(p, k) - price_bsm(p0, k)) <= 1e-12 * max(1.0, p.spot)


@settings(max_examples=200, deadline=None)
@given(market)
def test_call_bounds(p):
    c = price_bsm(p, "call")
    fwd = p.spot * math.exp(-p.dividend_yield * p.maturity)
    lower = max(fwd - p.strike * math.exp(-p.rate * p.maturity), 0.0)
    tol = 1e-10 * max(1.0, p.spot, p.strike)
    assert lower - tol <= c <= fwd + tol


def test_monotone_in_spot():
    spots = np.linspace(20, 300, 400)
    for q, vol, t in [(0.0, 0.2, 1.0), (0.03, 0.5, 0.25), (0.01, 0.1, 3.0)]:
        calls = bsm_price_array(spots, 100.0, 0.04, q, vol, t, 1)
        puts = bsm_price_array(spots, 100.0, 0.04, q, vol, t, -1)
        assert np.all(np.diff(calls) >= 0)
        assert np.all(np.diff(puts) <= 0)


def test_converges_to_payoff_near_expiry():
    spots = np.array([80.0, 99.0, 101.0, 120.0])
    for kind in (1, -1):
        got = bsm_price_array(spots, 100.0, 0.05, 0.02, 0.3, 1e-8, kind)
        assert np.allclose(got, payoff(spots, 100.0, kind), atol=1e-6)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(4)
    s, k = rng.uniform(50, 150, 20), rng.uniform(50, 150, 20)
    got = bsm_price_array(s, k, 0.03, 0.01, 0.25, 0.7, 1)
    want = [price_bsm(MarketParams(a, b, 0.03, 0.01, 0.25, 0.7), "call") for a, b in zip(s, k)]
    assert np.allclose(got, want, rtol=0, atol=1e-13)
