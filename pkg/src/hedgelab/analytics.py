"""Closed-form Black-Scholes quantities for a European call.

Everything here accepts scalars or numpy arrays and broadcasts. ``tau`` is the
time to maturity in years and is used consistently inside d1 and d2.

The normal CDF is ``scipy.special.ndtr`` (Cephes erf/erfc based, accurate to
a few ulp across the real line, far inside the 1e-7 budget).
"""
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

TRADING_DAYS = 252


class DegenerateInputError(ValueError):
    """d1/d2 are undefined at zero volatility or zero time to maturity."""


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class BsInputs:
    spot: float
    strike: float
    rate: float
    vol: float
    tau: float

    def __post_init__(self):
        _check_domain(self.spot, self.strike, self.vol, self.tau)


def _check_domain(spot, strike, vol, tau):
    if np.any(np.asarray(spot) <= 0) or np.any(np.asarray(strike) <= 0):
        raise DomainError("spot and strike must be positive")
    if np.any(np.asarray(vol) < 0) or np.any(np.asarray(tau) < 0):
        raise DomainError("vol and tau must be non-negative")


def _scalar_or_array(x):
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


def norm_cdf(x):
    return _scalar_or_array(ndtr(x))


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi))


def bs_d1_d2(inp: BsInputs):
    if inp.vol == 0 or inp.tau == 0:
        raise DegenerateInputError(f"d1/d2 undefined for vol={inp.vol}, tau={inp.tau}")
    return _d1_d2(inp.spot, inp.strike, inp.rate, inp.vol, inp.tau)


def _d1_d2(spot, strike, rate, vol, tau):
    vsqrt = vol * np.sqrt(tau)
    d1 = (np.log(spot / strike) + (rate + 0.5 * vol * vol) * tau) / vsqrt
    return d1, d1 - vsqrt


def call_price(spot, strike, rate, vol, tau):
    """Vectorised call price with the zero-vol and expiry limits built in."""
    spot, strike, rate, vol, tau = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (spot, strike, rate, vol, tau)))
    _check_domain(spot, strike, vol, tau)
    disc_strike = strike * np.exp(-rate * tau)
    out = np.array(np.maximum(spot - disc_strike, 0.0), dtype=float)
    live = (vol > 0) & (tau > 0)
    if np.any(live):
        s, k, r, v, t = spot[live], strike[live], rate[live], vol[live], tau[live]
        d1, d2 = _d1_d2(s, k, r, v, t)
        price = ndtr(d1) * s - ndtr(d2) * k * np.exp(-r * t)
        # no-arbitrage bounds; rounding can push a deep OTM price a hair negative
        out[live] = np.clip(price, out[live], s)
    return _scalar_or_array(out)


def call_delta(spot, strike, rate, vol, tau):
    spot, strike, rate, vol, tau = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (spot, strike, rate, vol, tau)))
    _check_domain(spot, strike, vol, tau)
    # tau == 0: step at the strike, 0.5 on the tie
    out = np.where(spot > strike, 1.0, np.where(spot < strike, 0.0, 0.5))
    # vol == 0, tau > 0: step at the discounted strike
    fwd = spot - strike * np.exp(-rate * tau)
    flat = np.where(fwd > 0, 1.0, np.where(fwd < 0, 0.0, 0.5))
    out = np.array(np.where((tau > 0) & (vol == 0), flat, out), dtype=float)
    live = (vol > 0) & (tau > 0)
    if np.any(live):
        d1, _ = _d1_d2(spot[live], strike[live], rate[live], vol[live], tau[live])
        out[live] = ndtr(d1)
    return _scalar_or_array(out)


def bs_price(inp: BsInputs) -> float:
    return float(call_price(inp.spot, inp.strike, inp.rate, inp.vol, inp.tau))


def bs_delta(inp: BsInputs) -> float:
    return float(call_delta(inp.spot, inp.strike, inp.rate, inp.vol, inp.tau))
