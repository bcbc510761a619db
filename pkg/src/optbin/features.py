"""Feature vectors for the three approaches.

Index maps (frozen; models trained on one layout are useless on another):

Approach I (22)
    0-18   ascending order statistics of the 19 close log returns
    19     time to maturity, days
    20     rate, decimal
    21     moneyness S/K

Approach II (17)
    0-3    mean log return of open, high, low, close
    4-13   signed square root of the covariance entries (i >= j), row-major:
           OO, HO, HH, LO, LH, LL, CO, CH, CL, CC
    14-16  time to maturity, rate, moneyness

Approach III (19)
    0-16   Approach II
    17     previous option close / K
    18     mean of the 20 window closes / K
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

FACETS = ("O", "H", "L", "C")
_TRIL = np.tril_indices(4)

APPROACH_NAMES = {
    1: [f"lr_os_{i:02d}" for i in range(1, 20)] + ["ttm", "rate", "moneyness"],
    2: [f"mu_{f}" for f in FACETS]
    + [f"ssqrt_cov_{FACETS[i]}{FACETS[j]}" for i, j in zip(*_TRIL)]
    + ["ttm", "rate", "moneyness"],
}
APPROACH_NAMES[3] = APPROACH_NAMES[2] + ["prev_close_over_K", "mean_moneyness"]
N_FEATURES = {k: len(v) for k, v in APPROACH_NAMES.items()}


def log_returns(prices) -> np.ndarray:
    """Successive log returns ``ln(p[i+1] / p[i])`` along the last axis."""
    p = np.asarray(prices, dtype=float)
    if np.any(p <= 0):
        raise ValueError("log returns need strictly positive prices")
    return np.diff(np.log(p), axis=-1)


def order_statistics(lr) -> np.ndarray:
    return np.sort(np.asarray(lr, dtype=float), axis=-1, kind="stable")


@dataclass(frozen=True)
class OhlcMoments:
    means: np.ndarray  # (4,) open, high, low, close
    cov: np.ndarray  # (4, 4), denominator n - 1


def ohlc_moments(rec) -> OhlcMoments:
    lr = log_returns(rec.window.T)  # (4, 19)
    return OhlcMoments(lr.mean(axis=1), np.cov(lr, ddof=1))


def signed_sqrt(x):
    """``x / sqrt(|x|)``, with 0 mapped to 0."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.sqrt(np.abs(x))
    return float(out) if out.ndim == 0 else out


def _contract(rec):
    return [float(rec.ttm), float(rec.rate), rec.spot / rec.strike]


def approach1(rec) -> np.ndarray:
    os_ = order_statistics(log_returns(rec.closes))
    return np.concatenate([os_, _contract(rec)])


def approach2(rec) -> np.ndarray:
    m = ohlc_moments(rec)
    return np.concatenate([m.means, signed_sqrt(m.cov[_TRIL]), _contract(rec)])


def approach3(rec) -> np.ndarray:
    if rec.prev_close is None:
        raise ValueError(f"record {rec.date} K={rec.strike} has no previous close")
    extra = [rec.prev_close / rec.strike, float(np.mean(rec.closes)) / rec.strike]
    return np.concatenate([approach2(rec), extra])


APPROACHES = {1: approach1, 2: approach2, 3: approach3}


def featurize(rec, approach: int) -> np.ndarray:
    try:
        fn = APPROACHES[approach]
    except KeyError:
        raise ValueError(f"unknown approach {approach!r}; expected 1, 2 or 3") from None
    return fn(rec)


def feature_matrix(records, approach: int) -> np.ndarray:
    """Stack feature vectors of ``records`` into an ``(n, d)`` array."""
    if not records:
        return np.empty((0, N_FEATURES[approach]))
    X = np.vstack([featurize(r, approach) for r in records])
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature value")
    return X


def write_feature_csv(path, X, approach: int):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(APPROACH_NAMES[approach])
        for row in np.asarray(X):
            w.writerow([repr(float(v)) for v in row])
