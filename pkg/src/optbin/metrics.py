"""Evaluation of bin predictions: accuracy, EM, rho, error quantiles and a
total-least-squares bias diagnostic.

``actual`` holds integer bin labels.  ``predicted`` may hold integers or, for
the averaging ensemble, half-integers.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .features import feature_matrix
from .labels import BinConfig, bin_of, scaled_output

BAND_HALF_WIDTH = 2
DEFAULT_QUANTILES = (0.02, 0.25, 0.5, 0.75, 0.98)


def _pair(actual, predicted):
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.ndim != 1:
        raise ValueError(f"actual {a.shape} and predicted {p.shape} must be equal-length 1-D")
    if a.size == 0:
        raise ValueError("no predictions to score")
    return a, p


def accuracy(actual, predicted) -> float:
    a, p = _pair(actual, predicted)
    return float(np.mean(a == p))


def em(actual, predicted, w: float = 0.1) -> float:
    """Bin width times mean absolute bin-index error."""
    if not w > 0:
        raise ValueError("bin width must be positive")
    a, p = _pair(actual, predicted)
    return float(w * np.mean(np.abs(a - p)))


def rho(actual, predicted) -> float:
    """Fraction of predictions more than two bins away (strict)."""
    a, p = _pair(actual, predicted)
    return float(np.mean(np.abs(a - p) > BAND_HALF_WIDTH))


def band_hit_rate(actual, predicted) -> float:
    """Fraction of actual bins inside ``[P - 2, P + 2]``."""
    a, p = _pair(actual, predicted)
    return float(np.mean((a >= p - BAND_HALF_WIDTH) & (a <= p + BAND_HALF_WIDTH)))


@dataclass
class ErrorDistribution:
    quantiles: dict[float, float]
    cdf: list[tuple[float, float]]  # (error value, P(error <= value))


def error_distribution(actual, predicted, quantiles=DEFAULT_QUANTILES) -> ErrorDistribution:
    """Nearest-rank quantiles and the empirical CDF of signed errors ``C - P``."""
    a, p = _pair(actual, predicted)
    q = np.asarray(quantiles, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("quantiles must lie strictly inside (0, 1)")
    err = np.sort(a - p)
    # nearest rank: smallest e with F(e) >= q
    qv = np.quantile(err, q, method="inverted_cdf")
    values, counts = np.unique(err, return_counts=True)
    cdf = np.cumsum(counts) / err.size
    return ErrorDistribution(
        {float(k): float(v) for k, v in zip(q, qv)},
        [(float(v), float(c)) for v, c in zip(values, cdf)],
    )


@dataclass(frozen=True)
class RegressionDiagnostic:
    slope: float
    intercept: float


def orthogonal_regression(x, y) -> RegressionDiagnostic:
    """Line ``y = a x + b`` minimising summed squared orthogonal distances."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two paired points")
    xm, ym = x.mean(), y.mean()
    sxx = np.mean((x - xm) ** 2)
    syy = np.mean((y - ym) ** 2)
    sxy = np.mean((x - xm) * (y - ym))
    if sxx == 0 and syy == 0:
        raise ValueError("all points coincide; regression line undefined")
    if sxy == 0:
        if sxx > syy:
            return RegressionDiagnostic(0.0, float(ym))
        raise ValueError("orthogonal regression line is vertical")
    d = syy - sxx
    slope = (d + math.sqrt(d * d + 4 * sxy * sxy)) / (2 * sxy)
    return RegressionDiagnostic(float(slope), float(ym - slope * xm))


@dataclass
class MetricsReport:
    accuracy: float
    em: float
    rho: float
    error_quantiles: dict[float, float]
    n: int
    width: float
    extra: dict = field(default_factory=dict)

    def to_json(self, **extra) -> str:
        d = asdict(self)
        d["error_quantiles"] = {repr(k): v for k, v in self.error_quantiles.items()}
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)


def evaluate(actual, predicted, cfg: BinConfig = BinConfig(), quantiles=DEFAULT_QUANTILES) -> MetricsReport:
    dist = error_distribution(actual, predicted, quantiles)
    return MetricsReport(
        accuracy=accuracy(actual, predicted),
        em=em(actual, predicted, cfg.width),
        rho=rho(actual, predicted),
        error_quantiles=dist.quantiles,
        n=len(actual),
        width=cfg.width,
    )


def em_vs_binwidth(dataset, widths, trainer, approach: int = 1, upper: float = 5.0):
    """Test-split EM for each bin width, retraining from scratch per width.

    ``dataset`` is a :class:`~optbin.market_data.SplitDataset`;
    ``trainer(X, labels, cfg)`` must return an object with ``predict(X)``.
    Each width uses ``BinConfig.covering(w, upper)`` so the label range stays
    fixed while the class count changes.
    """
    widths = [float(w) for w in widths]
    for w in widths:
        if not w > 0:
            raise ValueError(f"bin width must be positive, got {w}")
    X_tr = feature_matrix(dataset.train, approach)
    X_te = feature_matrix(dataset.test, approach)
    y_tr = scaled_output([r.close for r in dataset.train], [r.strike for r in dataset.train])
    y_te = scaled_output([r.close for r in dataset.test], [r.strike for r in dataset.test])
    rows = []
    for w in widths:
        cfg = BinConfig.covering(w, upper)
        model = trainer(X_tr, bin_of(y_tr, cfg), cfg)
        rows.append((w, em(bin_of(y_te, cfg), model.predict(X_te), w)))
    return rows


def write_rows_csv(path, header, rows, comment=None):
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
