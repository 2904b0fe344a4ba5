"""Black-Scholes call prices and implied volatility (spot 1, zero rates)."""

from __future__ import annotations

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from roughnet.errors import ArbitrageError, NumericalError, ValidationError

VOL_LO = 1e-8
VOL_HI = 5.0
VOL_MAX = 20.0


def bs_call(sigma, moneyness, maturity):
    sigma = np.asarray(sigma, dtype=float)
    K = np.asarray(moneyness, dtype=float)
    sd = sigma * np.sqrt(maturity)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (-np.log(K) + 0.5 * sd * sd) / sd
    return ndtr(d1) - K * ndtr(d1 - sd)


def bs_vega(sigma, moneyness, maturity):
    sd = sigma * np.sqrt(maturity)
    d1 = (-np.log(moneyness) + 0.5 * sd * sd) / sd
    return np.exp(-0.5 * d1 * d1) / np.sqrt(2 * np.pi) * np.sqrt(maturity)


def _check_band(price, moneyness, maturity):
    if not (moneyness > 0 and maturity > 0):
        raise ValidationError("moneyness and maturity must be positive")
    lower = max(1.0 - moneyness, 0.0)
    if not lower < price < 1.0:
        raise ArbitrageError(
            f"price {price!r} outside no-arbitrage band ({lower}, 1) at K={moneyness}, T={maturity}"
        )


def implied_vol(price, moneyness, maturity):
    """Scalar Black-Scholes inversion by Brent's method."""
    price, moneyness, maturity = float(price), float(moneyness), float(maturity)
    _check_band(price, moneyness, maturity)

    def f(s):
        return float(bs_call(s, moneyness, maturity)) - price

    lo, hi = VOL_LO, VOL_HI
    if f(lo) > 0:
        # time value below what the smallest bracket vol can resolve
        return lo
    while f(hi) < 0:
        hi *= 2.0
        if hi > VOL_MAX:
            raise NumericalError(f"cannot bracket implied vol for price {price} (K={moneyness}, T={maturity})")
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)


def implied_vol_array(prices, moneyness, maturity, tol=1e-13, max_iter=100):
    """Vectorised inversion: Newton steps safeguarded by a shrinking bracket.

    ``prices``, ``moneyness`` and ``maturity`` broadcast together. Raises on the
    first cell outside the no-arbitrage band.
    """
    prices, K, T = np.broadcast_arrays(
        np.asarray(prices, float), np.asarray(moneyness, float), np.asarray(maturity, float)
    )
    lower = np.maximum(1.0 - K, 0.0)
    bad = ~((prices > lower) & (prices < 1.0))
    if np.any(bad):
        i = np.argwhere(bad)[0]
        i = tuple(i)
        raise ArbitrageError(
            f"price {prices[i]!r} outside no-arbitrage band at K={K[i]}, T={T[i]}",
        )
    lo = np.full(prices.shape, VOL_LO)
    hi = np.full(prices.shape, VOL_MAX)
    if np.any(bs_call(hi, K, T) < prices):
        raise NumericalError("cannot bracket implied vol: price too close to spot")
    sigma = np.full(prices.shape, 0.3)
    for _ in range(max_iter):
        diff = bs_call(sigma, K, T) - prices
        done = np.abs(diff) <= tol
        if np.all(done):
            break
        hi = np.where(diff > 0, sigma, hi)
        lo = np.where(diff < 0, sigma, lo)
        vega = bs_vega(sigma, K, T)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = sigma - diff / vega
        inside = np.isfinite(step) & (step > lo) & (step < hi)
        sigma = np.where(done, sigma, np.where(inside, step, 0.5 * (lo + hi)))
        if np.all(hi - lo <= 1e-15 * hi):
            break
    return sigma
