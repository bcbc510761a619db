"""Scale-free option price target and its equispaced ordinal bins.

The target is ``100 * C / K``.  Bin ``n`` (1-based) covers the half-open
interval ``((n - 1) * w, n * w]``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

# keeps exact multiples of w in the lower (right-closed) bin
_BOUNDARY_EPS = 1e-9


@dataclass(frozen=True)
class BinConfig:
    width: float = 0.1
    n_classes: int = 50

    def __post_init__(self):
        if not self.width > 0:
            raise ValueError(f"bin width must be positive, got {self.width}")
        if self.n_classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.n_classes}")

    @classmethod
    def covering(cls, width: float, upper: float = 5.0) -> "BinConfig":
        """Config of the given width whose bins span ``(0, upper]``."""
        return cls(width, max(2, math.ceil(upper / width - _BOUNDARY_EPS)))

    @property
    def upper(self) -> float:
        return self.width * self.n_classes


def scaled_output(C, K):
    """Return ``100 * C / K``; accepts scalars or arrays."""
    C = np.asarray(C, dtype=float)
    K = np.asarray(K, dtype=float)
    if np.any(K <= 0):
        raise ValueError("strike must be positive")
    if np.any(C < 0):
        raise ValueError("option price must be non-negative")
    out = 100.0 * C / K
    return float(out) if out.ndim == 0 else out


@dataclass
class BinStats:
    """Counters for values that had to be coerced into the label range."""

    clamped: int = 0
    degenerate: int = 0


def bin_of(value, cfg: BinConfig = BinConfig(), stats: BinStats | None = None):
    """Label(s) of ``value`` under ``cfg``.

    Values above the covered range are clamped to ``cfg.n_classes``; values
    ``<= 0`` get label 1 and are counted as degenerate.
    """
    v = np.asarray(value, dtype=float)
    n = np.ceil(v / cfg.width - _BOUNDARY_EPS).astype(np.int64)
    degenerate = v <= 0
    clamped = n > cfg.n_classes
    n = np.clip(n, 1, cfg.n_classes)
    n_deg, n_clamp = int(degenerate.sum()), int(clamped.sum())
    if stats is not None:
        stats.degenerate += n_deg
        stats.clamped += n_clamp
    if n_clamp:
        log.debug("clamped %d value(s) above %.4g into bin %d", n_clamp, cfg.upper, cfg.n_classes)
    return int(n) if n.ndim == 0 else n


def bin_interval(n, cfg: BinConfig = BinConfig()) -> tuple[float, float]:
    """The ``(lo, hi]`` interval of bin ``n``."""
    if not 1 <= n <= cfg.n_classes:
        raise ValueError(f"label {n} outside [1, {cfg.n_classes}]")
    return (n - 1) * cfg.width, n * cfg.width


def price_band(n, K, cfg: BinConfig = BinConfig()):
    """Price interval of the five-bin band centred on prediction ``n``.

    Covers bins ``n - 2 .. n + 2``, i.e. ``(K (n-3) w / 100, K (n+2) w / 100]``
    with the lower end clamped at zero.  ``n`` may be a half-integer
    (ensemble prediction) and may be an array.
    """
    n = np.asarray(n, dtype=float)
    K = np.asarray(K, dtype=float)
    lo = np.maximum(K * (n - 3.0) * cfg.width / 100.0, 0.0)
    hi = K * (n + 2.0) * cfg.width / 100.0
    if lo.ndim == 0:
        return float(lo), float(hi)
    return lo, hi


def mid_price(n, K, cfg: BinConfig = BinConfig()):
    """Price at the centre of predicted bin ``n``: ``K (n - 1/2) w / 100``."""
    out = np.asarray(K, dtype=float) * (np.asarray(n, dtype=float) - 0.5) * cfg.width / 100.0
    return float(out) if out.ndim == 0 else out
