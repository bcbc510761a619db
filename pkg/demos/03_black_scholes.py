"""
Black-Scholes pieces
====================

Pricing, the implied-volatility inverse, and the historical-volatility
benchmark on synthetic data whose true volatility is known.
"""

import numpy as np

from optbin.black_scholes import bs_benchmark, bs_call, historical_volatility, implied_vol
from optbin.labels import BinConfig
from optbin.metrics import em
from optbin.simulator import GbmConfig, labels_of, synthetic_dataset

print("ATM call, 6 months, 20% vol:", round(bs_call(100, 100, 0.05, 0.2, 0.5), 6))

sigmas = np.linspace(0.05, 1.0, 5)
prices = bs_call(100, 100, 0.05, sigmas, 30 / 365)
print("round trip:", implied_vol(prices, 100, 100, 0.05, 30 / 365).round(8))

closes = 100 * np.exp(np.cumsum([0.01, -0.01] * 10))
print("alternating +-1% days ->", round(historical_volatility(closes), 4), "annualised")

###############################################################################
# Binned B-S with the true sigma reproduces synthetic labels; with the
# 20-day estimate it does not

cfg = BinConfig()
recs = synthetic_dataset(GbmConfig(sigma=0.13, seed=3))
truth = labels_of(recs, cfg)
print("EM with true sigma:      ", em(truth, bs_benchmark(recs, cfg, sigma=0.13).labels))
print("EM with 20-day estimate: ", round(em(truth, bs_benchmark(recs, cfg).labels), 4))
