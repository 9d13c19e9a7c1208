import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from hedgelab.analytics import (BsInputs, DegenerateInputError, DomainError, bs_d1_d2,
                                bs_delta, bs_price, call_delta, call_price, norm_cdf)

mp.mp.dps = 40


def mp_price(s, k, r, v, t):
    s, k, r, v, t = map(mp.mpf, (s, k, r, v, t))
    d1 = (mp.log(s / k) + (r + v * v / 2) * t) / (v * mp.sqrt(t))
    d2 = d1 - v * mp.sqrt(t)
    return float(s * mp.ncdf(d1) - k * mp.exp(-r * t) * mp.ncdf(d2)), float(mp.ncdf(d1))


def quad_price(s, k, r, v, t):
    # discounted risk-neutral expectation of the payoff, integrated over z
    def payoff(z):
        st_ = s * math.exp((r - v * v / 2) * t + v * math.sqrt(t) * z)
        return max(st_ - k, 0.0) * math.exp(-z * z / 2) / math.sqrt(2 * math.pi)
    z0 = (math.log(k / s) - (r - v * v / 2) * t) / (v * math.sqrt(t))
    val, _ = integrate.quad(payoff, max(z0, -14.0), max(z0, -14.0) + 28.0, epsabs=1e-13,
                            epsrel=1e-12, limit=200)
    return math.exp(-r * t) * val


def test_norm_cdf_against_mpmath():
    for x in [-8.0, -3.3, -1.0, 0.0, 0.25, 2.0, 6.5]:
        assert norm_cdf(x) == pytest.approx(float(mp.ncdf(x)), rel=1e-14, abs=1e-300)


CASES = [(100, 100, 0.02, 0.2, 22 / 252), (90, 100, 0.02, 0.2, 0.5), (120, 100, 0.05, 0.35, 1.0),
         (100, 80, 0.0, 0.1, 1 / 252), (100, 130, 0.01, 0.6, 2.0)]


@pytest.mark.parametrize("case", CASES)
def test_price_and_delta_against_mpmath(case):
    price, delta = mp_price(*case)
    inp = BsInputs(*case)
    assert bs_price(inp) == pytest.approx(price, rel=1e-12, abs=1e-12)
    assert bs_delta(inp) == pytest.approx(delta, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("case", CASES)
def test_price_against_quadrature(case):
    assert bs_price(BsInputs(*case)) == pytest.approx(quad_price(*case), rel=1e-8, abs=1e-9)


def test_d1_d2_reference_point():
    d1, d2 = bs_d1_d2(BsInputs(100, 100, 0.0, 0.2, 1.0))
    assert d1 == pytest.approx(0.1, abs=1e-15)
    assert d2 == pytest.approx(-0.1, abs=1e-15)


def test_degenerate_inputs():
    with pytest.raises(DegenerateInputError):
        bs_d1_d2(BsInputs(100, 100, 0.0, 0.0, 1.0))
    with pytest.raises(DegenerateInputError):
        bs_d1_d2(BsInputs(100, 100, 0.0, 0.2, 0.0))
    with pytest.raises(DomainError):
        BsInputs(-1, 100, 0.0, 0.2, 1.0)
    with pytest.raises(DomainError):
        call_price(100, 100, 0.0, -0.1, 1.0)


def test_limits():
    # expiry: intrinsic value and a step delta with 0.5 on the tie
    assert call_price(110, 100, 0.02, 0.2, 0.0) == 10.0
    assert call_price(90, 100, 0.02, 0.2, 0.0) == 0.0
    assert call_delta([90, 100, 110], 100, 0.02, 0.2, 0.0).tolist() == [0.0, 0.5, 1.0]
    # zero vol: forward intrinsic against the discounted strike
    t = 0.5
    assert call_price(100, 100, 0.02, 0.0, t) == pytest.approx(100 - 100 * math.exp(-0.01))
    assert call_delta(99.5, 100, 0.02, 0.0, t) == 1.0
    assert call_delta(98.0, 100, 0.02, 0.0, t) == 0.0


def test_vectorised_matches_scalar():
    spots = np.linspace(80, 120, 11)
    vec = call_price(spots, 100, 0.02, 0.2, 0.1)
    assert vec.shape == (11,)
    for s, p in zip(spots, vec):
        assert p == bs_price(BsInputs(s, 100, 0.02, 0.2, 0.1))


pos = st.floats(50, 200)
vols = st.floats(0.01, 1.0)
taus = st.floats(1 / 252, 3.0)
rates = st.floats(0.0, 0.1)


@given(pos, pos, rates, vols, taus)
def test_put_call_parity_and_bounds(s, k, r, v, t):
    c = call_price(s, k, r, v, t)
    put = c - s + k * math.exp(-r * t)
    assert max(s - k * math.exp(-r * t), 0.0) - 1e-9 <= c <= s
    assert put >= -1e-9
    d = call_delta(s, k, r, v, t)
    assert 0.0 <= d <= 1.0


@given(pos, pos, rates, vols, taus, st.floats(0.001, 0.2))
def test_monotone_in_spot_and_vol(s, k, r, v, t, bump):
    c = call_price(s, k, r, v, t)
    assert call_price(s * (1 + bump), k, r, v, t) >= c - 1e-12
    assert call_price(s, k, r, v + bump, t) >= c - 1e-12
    assert call_delta(s * (1 + bump), k, r, v, t) >= call_delta(s, k, r, v, t) - 1e-15
