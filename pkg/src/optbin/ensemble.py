"""Simple averaging ensemble of a network and a boosted-tree classifier."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def average_predict(p_ann, p_gbt):
    """Mean of two bin predictions; result is an integer or half-integer."""
    out = (np.asarray(p_ann, dtype=float) + np.asarray(p_gbt, dtype=float)) / 2.0
    return float(out) if out.ndim == 0 else out


@dataclass
class EnsembleModel:
    ann: object
    gbt: object

    def predict(self, X):
        return average_predict(self.ann.predict(X), self.gbt.predict(X))
