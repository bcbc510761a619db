"""Synthetic GBM markets priced by Black-Scholes, and the EM-vs-volatility sweep.

Synthetic underlyings have no intraday range, so every bar has
open = high = low = close; only close-based (Approach I) features make sense.
"""
from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, replace

import numpy as np

from .black_scholes import DAYS_PER_YEAR, bs_call
from .features import feature_matrix
from .labels import BinConfig, bin_of, scaled_output
from .market_data import MONEYNESS_TOL, WINDOW, ContractRecord, OptionQuote, is_near_atm
from .metrics import em

DEFAULT_TTMS = (10, 25, 40)
DEFAULT_SIGMA_GRID = tuple(round(0.01 * k, 2) for k in range(1, 21))
EPOCH = dt.date(2000, 1, 3)


@dataclass(frozen=True)
class GbmConfig:
    sigma: float
    mu: float = 0.1
    days: int = 500
    steps_per_year: int = 252
    s0: float = 10000.0
    seed: int = 0
    rate: float = 0.05

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.days < WINDOW + 1:
            raise ValueError(f"need at least {WINDOW + 1} days")
        if not self.s0 > 0:
            raise ValueError("s0 must be positive")


def simulate_gbm(cfg: GbmConfig) -> np.ndarray:
    """Daily GBM path of length ``cfg.days`` starting at ``cfg.s0``."""
    rng = np.random.default_rng(cfg.seed)
    dt_ = 1.0 / cfg.steps_per_year
    z = rng.standard_normal(cfg.days - 1)
    steps = (cfg.mu - 0.5 * cfg.sigma**2) * dt_ + cfg.sigma * np.sqrt(dt_) * z
    return cfg.s0 * np.exp(np.concatenate([[0.0], np.cumsum(steps)]))


def moneyness_grid(n: int = 5, tol: float = MONEYNESS_TOL) -> np.ndarray:
    """Equispaced target values of ``S/K - 1`` spanning ``[-tol, tol]``."""
    return np.linspace(-tol, tol, n)


def strikes_for(spot: float, tick: float, grid=None) -> list[float]:
    """Near-ATM strikes for one day: ``S / (1 + m)`` rounded to ``tick``, deduplicated."""
    grid = moneyness_grid() if grid is None else grid
    out = []
    for m in grid:
        K = round(spot / (1.0 + m) / tick) * tick
        if K > 0 and is_near_atm(spot, K) and K not in out:
            out.append(K)
    return out


def synth_contracts(path, cfg: GbmConfig, ttms=DEFAULT_TTMS, grid=None, first_day: int = WINDOW + 1):
    """Black-Scholes-priced near-ATM calls on a simulated path.

    For every day index ``>= first_day`` (the window and the previous day are
    then always available), every ttm and every grid strike passing the
    near-ATM rule one record is made.  ``prev_close`` is the same contract
    (strike, expiry) priced on the previous day.  Strikes snap to a tick of
    ``s0 / 100``.
    """
    path = np.asarray(path, dtype=float)
    if len(path) < WINDOW + 1:
        raise ValueError(f"path needs at least {WINDOW + 1} points")
    tick = cfg.s0 / 100.0
    dates = [EPOCH + dt.timedelta(days=i) for i in range(len(path))]
    ohlc = np.repeat(path[:, None], 4, axis=1)
    records = []
    for i in range(max(first_day, WINDOW), len(path)):
        S, S_prev = path[i], path[i - 1]
        window = ohlc[i + 1 - WINDOW : i + 1]
        wdates = tuple(dates[i + 1 - WINDOW : i + 1])
        for ttm in ttms:
            for K in strikes_for(S, tick, grid):
                C = bs_call(S, K, cfg.rate, cfg.sigma, ttm / DAYS_PER_YEAR)
                C_prev = bs_call(S_prev, K, cfg.rate, cfg.sigma, (ttm + 1) / DAYS_PER_YEAR)
                q = OptionQuote(dates[i], dates[i] + dt.timedelta(days=ttm), K, C, C_prev, 1.0)
                records.append(ContractRecord(q, float(S), window, wdates, ttm, cfg.rate))
    return records


def synthetic_dataset(cfg: GbmConfig, ttms=DEFAULT_TTMS, grid=None):
    return synth_contracts(simulate_gbm(cfg), cfg, ttms, grid)


def labels_of(records, bins: BinConfig = BinConfig()) -> np.ndarray:
    return bin_of(
        scaled_output(np.array([r.close for r in records]), np.array([r.strike for r in records])), bins
    )


@dataclass
class EmvCurve:
    points: list[tuple[float, float]]  # (sigma, EM), sigma ascending

    @property
    def emv(self) -> float:
        """Grid volatility with the lowest EM; ties go to the lower sigma."""
        sig, ems = zip(*self.points)
        return sig[int(np.argmin(ems))]

    def em_at(self, sigma: float) -> float:
        for s, e in self.points:
            if abs(s - sigma) < 1e-12:
                return e
        raise KeyError(sigma)

    def to_csv(self) -> str:
        lines = ["sigma,em"] + [f"{s!r},{e!r}" for s, e in self.points]
        return "\n".join(lines) + "\n"

    def write_csv(self, path, comment=None):
        with open(path, "w", newline="") as fh:
            if comment:
                fh.write(f"# {comment}\n")
            fh.write(self.to_csv())


def point_seed(base_seed: int, sigma: float, rep: int = 0) -> int:
    """Simulation seed for one sweep point; depends on sigma, not grid position."""
    return base_seed + int(round(sigma * 10000)) + 1_000_003 * rep


def emv_sweep(model, base_cfg: GbmConfig, sigma_grid=DEFAULT_SIGMA_GRID, bins: BinConfig = BinConfig(),
              ttms=DEFAULT_TTMS, grid=None, repetitions: int = 1) -> EmvCurve:
    """EM of ``model`` on fresh synthetic test sets across ``sigma_grid``.

    ``model.predict`` receives Approach I feature rows.  Each point pools
    ``repetitions`` independently seeded paths.
    """
    sigmas = sorted({float(s) for s in sigma_grid})
    points = []
    for s in sigmas:
        recs = []
        for rep in range(repetitions):
            cfg = replace(base_cfg, sigma=s, seed=point_seed(base_cfg.seed, s, rep))
            recs += synthetic_dataset(cfg, ttms, grid)
        X = feature_matrix(recs, 1)
        points.append((s, em(labels_of(recs, bins), model.predict(X), bins.width)))
    return EmvCurve(points)


def read_emv_csv(path) -> EmvCurve:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return EmvCurve([(float(s), float(e)) for s, e in rows[1:]])
