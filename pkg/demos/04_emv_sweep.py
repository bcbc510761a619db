"""
Error-minimising volatility
===========================

Train on synthetic GBM markets at one volatility, then score the model on
fresh markets across a grid of volatilities.  The EM curve is V-shaped with
its minimum near the training volatility.  Takes a minute or two.
"""

from optbin.features import feature_matrix
from optbin.gbt import GbtConfig, boost
from optbin.mlp import MlpTrainConfig, train
from optbin.simulator import GbmConfig, emv_sweep, labels_of, synthetic_dataset

recs = synthetic_dataset(GbmConfig(sigma=0.13, seed=7))
X, y = feature_matrix(recs, 1), labels_of(recs)
print(len(recs), "training records at sigma = 0.13")

ann = train(X, y, MlpTrainConfig())
curve = emv_sweep(ann, GbmConfig(sigma=0.13, seed=1000))
for s, e in curve.points:
    print(f"  sigma {s:.2f}  EM {e:.3f}  " + "#" * int(e * 60))
print("ANN EMV:", curve.emv)

gbt = boost(X, y, GbtConfig(n_rounds=30))
print("GBT (30 rounds) EMV:", emv_sweep(gbt, GbmConfig(sigma=0.13, seed=1000)).emv)
