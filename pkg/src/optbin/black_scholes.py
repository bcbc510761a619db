"""Black-Scholes benchmark: pricing, historical and implied volatility, IV bands."""
from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .labels import BinConfig, bin_of, price_band, scaled_output

DAYS_PER_YEAR = 365.0
TRADING_DAYS = 252.0
SIGMA_FLOOR = 1e-4
IV_BRACKET = (1e-4, 5.0)


class NoSolutionError(ValueError):
    """Price lies outside the no-arbitrage bounds, so no implied vol exists."""


def norm_cdf(x):
    out = ndtr(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BsInputs:
    S: float
    K: float
    r: float
    sigma: float
    tau: float  # years


def bs_call(S, K=None, r=None, sigma=None, tau=None):
    """European call price.  Broadcasts over array arguments.

    Accepts either a :class:`BsInputs` or the five parameters.
    """
    if isinstance(S, BsInputs):
        S, K, r, sigma, tau = S.S, S.K, S.r, S.sigma, S.tau
    S, K, r, sigma, tau = (np.asarray(a, dtype=float) for a in (S, K, r, sigma, tau))
    if np.any(sigma <= 0) or np.any(tau <= 0):
        raise ValueError("sigma and tau must be positive")
    if np.any(S <= 0) or np.any(K <= 0):
        raise ValueError("S and K must be positive")
    vol = sigma * np.sqrt(tau)
    d1 = (np.log(S / K) + (r + 0.5 * sigma**2) * tau) / vol
    d2 = d1 - vol
    price = S * ndtr(d1) - K * np.exp(-r * tau) * ndtr(d2)
    return float(price) if price.ndim == 0 else price


def call_bounds(S, K, r, tau):
    """No-arbitrage bounds ``(max(S - K e^{-r tau}, 0), S)``."""
    S, K, r, tau = (np.asarray(a, dtype=float) for a in (S, K, r, tau))
    return np.maximum(S - K * np.exp(-r * tau), 0.0), S


def historical_volatility(closes, annualization: float = TRADING_DAYS) -> float:
    """Annualised sample std (ddof=1) of close-to-close log returns.

    A constant window gives 0; callers treat that as degenerate.
    """
    p = np.asarray(closes, dtype=float)
    if np.any(p <= 0):
        raise ValueError("prices must be positive")
    lr = np.diff(np.log(p))
    return float(np.std(lr, ddof=1) * math.sqrt(annualization))


def implied_vol(price, S, K, r, tau, tol=1e-8, max_iter=200, bracket=IV_BRACKET, strict=True):
    """Implied volatility by bisection on ``bracket``.

    Vectorised: elementwise over broadcast inputs.  Out-of-bounds prices raise
    :class:`NoSolutionError` when ``strict``; otherwise they come back as NaN.
    """
    price, S, K, r, tau = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (price, S, K, r, tau)))
    lo_b, hi_b = call_bounds(S, K, r, tau)
    ok = (price > lo_b) & (price < hi_b)
    if strict and not np.all(ok):
        raise NoSolutionError("price outside (max(S - K e^{-r tau}, 0), S)")

    lo = np.full(price.shape, bracket[0])
    hi = np.full(price.shape, bracket[1])
    sigma = 0.5 * (lo + hi)
    done = ~ok
    for _ in range(max_iter):
        sigma = np.where(done, sigma, 0.5 * (lo + hi))
        diff = bs_call(S, K, r, sigma, tau) - price
        done = done | (np.abs(diff) <= tol)
        high = diff > 0
        hi = np.where(~done & high, sigma, hi)
        lo = np.where(~done & ~high, sigma, lo)
        if done.all():
            break
    out = np.where(ok, sigma, np.nan)
    return float(out) if out.ndim == 0 else out


@dataclass
class BenchmarkResult:
    labels: np.ndarray
    prices: np.ndarray
    sigma: np.ndarray
    floored: np.ndarray  # True where sigma was raised to SIGMA_FLOOR


def bs_benchmark(records, cfg: BinConfig = BinConfig(), sigma=None, days_per_year=DAYS_PER_YEAR):
    """Black-Scholes bin predictions for ``records``.

    Volatility is the 20-day historical estimate of each record's window unless
    ``sigma`` is given (scalar or per-record), as for synthetic data whose true
    volatility is known.
    """
    recs = list(records)
    S = np.array([r.spot for r in recs])
    K = np.array([r.strike for r in recs])
    rate = np.array([r.rate for r in recs])
    tau = np.array([r.ttm for r in recs], dtype=float) / days_per_year
    if sigma is None:
        sig = np.array([historical_volatility(r.closes) for r in recs])
    else:
        sig = np.broadcast_to(np.asarray(sigma, dtype=float), S.shape).copy()
    floored = ~(sig >= SIGMA_FLOOR)
    sig[floored] = SIGMA_FLOOR
    prices = bs_call(S, K, rate, sig, tau) if recs else np.empty(0)
    labels = bin_of(scaled_output(np.asarray(prices), K), cfg) if recs else np.empty(0, dtype=np.int64)
    return BenchmarkResult(np.atleast_1d(labels), np.atleast_1d(prices), sig, floored)


@dataclass(frozen=True)
class IvBandPoint:
    date: object
    iv_low: float
    iv_high: float
    iv_market: float


@dataclass
class IvBandSeries:
    points: list[IvBandPoint]
    hit_rate: float
    dropped_dates: int

    def write_csv(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            w = csv.writer(fh)
            w.writerow(["date", "iv_low", "iv_high", "iv_market"])
            for p in self.points:
                w.writerow([str(p.date), repr(p.iv_low), repr(p.iv_high), repr(p.iv_market)])


_CLAMP = 1e-8


def iv_band_series(records, predictions, cfg: BinConfig = BinConfig(), days_per_year=DAYS_PER_YEAR) -> IvBandSeries:
    """Daily averaged implied-vol band of the predicted price band vs market IV.

    Band endpoints are clamped just inside the no-arbitrage bounds before
    inversion.  Dates where no record's market price is invertible are dropped.
    """
    recs = list(records)
    pred = np.asarray(predictions, dtype=float)
    if len(recs) != len(pred):
        raise ValueError("predictions must align with records")
    S = np.array([r.spot for r in recs])
    K = np.array([r.strike for r in recs])
    rate = np.array([r.rate for r in recs])
    tau = np.array([r.ttm for r in recs], dtype=float) / days_per_year
    C = np.array([r.close for r in recs])

    lo_b, hi_b = call_bounds(S, K, rate, tau)
    p_lo, p_hi = price_band(pred, K, cfg)
    p_lo = np.clip(p_lo, lo_b + _CLAMP, hi_b - _CLAMP)
    p_hi = np.clip(p_hi, lo_b + _CLAMP, hi_b - _CLAMP)
    iv_lo = implied_vol(p_lo, S, K, rate, tau, strict=False)
    iv_hi = implied_vol(p_hi, S, K, rate, tau, strict=False)
    iv_mkt = implied_vol(C, S, K, rate, tau, strict=False)

    by_date = defaultdict(list)
    for i, r in enumerate(recs):
        by_date[r.date].append(i)
    points, dropped = [], 0
    for d in sorted(by_date):
        idx = np.array(by_date[d])
        good = idx[np.isfinite(iv_mkt[idx]) & np.isfinite(iv_lo[idx]) & np.isfinite(iv_hi[idx])]
        if good.size == 0:
            dropped += 1
            continue
        points.append(IvBandPoint(d, float(iv_lo[good].mean()), float(iv_hi[good].mean()), float(iv_mkt[good].mean())))
    hits = sum(p.iv_low <= p.iv_market <= p.iv_high for p in points)
    return IvBandSeries(points, hits / len(points) if points else float("nan"), dropped)
