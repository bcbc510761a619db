"""Record builders shared by the tests."""
import datetime as dt

import numpy as np

from optbin.market_data import WINDOW, ContractRecord, OptionQuote


def make_record(window=None, S=None, K=100.0, C=2.0, prev_close=1.9, ttm=10, rate=0.06, volume=5.0,
                date=dt.date(2016, 3, 1)):
    """Hand-built record; ``window`` is (20, 4) OHLC or (20,) closes."""
    if window is None:
        window = np.full(WINDOW, 100.0 if S is None else S)
    window = np.asarray(window, dtype=float)
    if window.ndim == 1:
        window = np.repeat(window[:, None], 4, axis=1)
    dates = tuple(date - dt.timedelta(days=WINDOW - 1 - i) for i in range(WINDOW))
    q = OptionQuote(date, date + dt.timedelta(days=ttm), K, C, prev_close, volume)
    return ContractRecord(q, float(window[-1, 3]), window, dates, ttm, rate)


def random_ohlc(rng, n=WINDOW, s0=100.0, vol=0.01):
    close = s0 * np.exp(np.cumsum(rng.normal(0, vol, n)))
    opn = close * np.exp(rng.normal(0, vol / 3, n))
    high = np.maximum(opn, close) * (1 + np.abs(rng.normal(0, vol / 2, n)))
    low = np.minimum(opn, close) * (1 - np.abs(rng.normal(0, vol / 2, n)))
    return np.column_stack([opn, high, low, close])


def clustered_toy(n=200, seed=0):
    """Three linearly separable square clusters with a clear margin."""
    rng = np.random.default_rng(seed)
    y = rng.integers(1, 4, n)
    centers = np.array([[-1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    return centers[y - 1] + rng.uniform(-0.35, 0.35, (n, 2)), y
