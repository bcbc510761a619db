"""
From CSV quotes to a scored model
=================================

Ingest the bundled market-style fixture, filter it down to near-the-money,
traded, 3..45 day contracts, split it chronologically, train both learners
and their averaging ensemble, and compare them with a Black-Scholes pricer
that uses 20-day historical volatility.
"""

from collections import Counter
from importlib import resources

import numpy as np

from optbin.black_scholes import bs_benchmark, iv_band_series
from optbin.ensemble import EnsembleModel
from optbin.features import feature_matrix
from optbin.gbt import GbtConfig, boost
from optbin.labels import BinConfig, bin_of, mid_price, scaled_output
from optbin.market_data import (
    build_records, chronological_split, filter_records, parse_option_csv, parse_underlying_csv, parse_yield_csv,
)
from optbin.metrics import evaluate, orthogonal_regression
from optbin.mlp import MlpTrainConfig, train

data = resources.files("optbin") / "data"
drops = Counter()
records = build_records(
    parse_underlying_csv(data / "synthetic_underlying.csv"),
    parse_option_csv(data / "synthetic_options.csv"),
    parse_yield_csv(data / "synthetic_yields.csv"),
    drops,
)
kept = filter_records(records, drops)
split = chronological_split(kept, 0.7)
print(f"{len(records)} joined records, {len(kept)} kept; drops {dict(drops)}")
print(f"train {len(split.train)} / test {len(split.test)}")

cfg = BinConfig()


def labels(recs):
    return bin_of(scaled_output([r.close for r in recs], [r.strike for r in recs]), cfg)


X_tr, y_tr = feature_matrix(split.train, 1), labels(split.train)
X_te, y_te = feature_matrix(split.test, 1), labels(split.test)

###############################################################################
# Train and score.  The fixture holds only ~150 training rows, far too few
# for the network at its default learning rate; demo 04 trains it on
# thousands of synthetic contracts.

ann = train(X_tr, y_tr, MlpTrainConfig(seed=1))
gbt = boost(X_tr, y_tr, GbtConfig(n_rounds=30))
models = {"ann": ann, "gbt": gbt, "ensemble": EnsembleModel(ann, gbt)}
for name, m in models.items():
    r = evaluate(y_te, m.predict(X_te), cfg)
    print(f"{name:9s} accuracy {r.accuracy:.3f}  EM {r.em:.3f}  rho {r.rho:.3f}  2%/98% {r.error_quantiles[0.02]}/{r.error_quantiles[0.98]}")

bench = bs_benchmark(split.test, cfg)
r = evaluate(y_te, bench.labels, cfg)
print(f"{'B-S':9s} accuracy {r.accuracy:.3f}  EM {r.em:.3f}  rho {r.rho:.3f}")

###############################################################################
# Fair-pricing diagnostic: orthogonal regression of actual price on the
# predicted mid-bin price, and the daily implied-volatility band

pred = gbt.predict(X_te)
strikes = np.array([r.strike for r in split.test])
reg = orthogonal_regression(mid_price(pred, strikes, cfg), [r.close for r in split.test])
print(f"orthogonal regression: slope {reg.slope:.3f}, intercept {reg.intercept:.2f}")

band = iv_band_series(split.test, pred, cfg)
print(f"market IV inside the predicted band on {band.hit_rate:.0%} of {len(band.points)} dates")
