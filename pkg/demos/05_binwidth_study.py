"""
EM against bin width
====================

Retrain at several bin widths on the same split.  Each width keeps the label
range (0, 5] fixed, so finer bins mean more classes.
"""

from importlib import resources

from optbin.gbt import GbtConfig, boost
from optbin.market_data import (
    build_records, chronological_split, filter_records, parse_option_csv, parse_underlying_csv, parse_yield_csv,
)
from optbin.metrics import em_vs_binwidth

data = resources.files("optbin") / "data"
split = chronological_split(filter_records(build_records(
    parse_underlying_csv(data / "synthetic_underlying.csv"),
    parse_option_csv(data / "synthetic_options.csv"),
    parse_yield_csv(data / "synthetic_yields.csv"),
)))


def trainer(X, y, cfg):
    return boost(X, y, GbtConfig(n_rounds=30, n_classes=cfg.n_classes))


for w, e in em_vs_binwidth(split, [0.05, 0.075, 0.1, 0.25, 0.5], trainer):
    print(f"w = {w:<6} EM = {e:.3f}")
