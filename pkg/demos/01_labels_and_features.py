"""
Scale-free labels and feature vectors
=====================================

An option price C with strike K is turned into the dimensionless value
100 C / K and then into one of 50 ordinal bins of width 0.1.  The inputs
the learners see are built from a 20-day window of the underlying.
"""

import numpy as np

from optbin.labels import BinConfig, bin_interval, bin_of, price_band, scaled_output
from optbin.features import APPROACH_NAMES, featurize
from optbin.market_data import ContractRecord, OptionQuote
import datetime as dt

# a call on an index near 8300, struck at 8400, trading at 95
v = scaled_output(95.0, 8400.0)
cfg = BinConfig()
n = bin_of(v, cfg)
print(f"100 C / K = {v:.4f} -> bin {n}, interval {bin_interval(n, cfg)}")

# the five-bin band around a prediction, back in price units
print("price band for bin", n, "->", price_band(n, 8400.0, cfg))

# bins are right-closed: exactly 1.0 sits in bin 10, a hair above goes to 11
print(bin_of(np.array([1.0, 1.0000001]), cfg))

###############################################################################
# A hand-built contract record with a random OHLC window

rng = np.random.default_rng(0)
closes = 8300 * np.exp(np.cumsum(rng.normal(0, 0.01, 20)))
spread = closes * 0.004
window = np.column_stack([closes - spread / 3, closes + spread, closes - spread, closes])
dates = tuple(dt.date(2016, 2, 1) + dt.timedelta(days=i) for i in range(20))
quote = OptionQuote(dates[-1], dates[-1] + dt.timedelta(days=17), 8400.0, 95.0, 101.5, 1200)
rec = ContractRecord(quote, float(closes[-1]), window, dates, 17, 0.0655)

for approach in (1, 2, 3):
    x = featurize(rec, approach)
    print(f"approach {approach}: {len(x)} features, last three {dict(zip(APPROACH_NAMES[approach][-3:], x[-3:].round(5).tolist()))}")

# rescaling every price (window, strike, option) leaves all features unchanged
scaled = ContractRecord(
    OptionQuote(quote.date, quote.expiry, 8400.0 * 3, 95.0 * 3, 101.5 * 3, 1200),
    float(closes[-1] * 3), window * 3, dates, 17, 0.0655,
)
print("max feature change after x3 rescale:", np.abs(featurize(rec, 3) - featurize(scaled, 3)).max())
