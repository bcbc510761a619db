import numpy as np

from optbin.ensemble import EnsembleModel, average_predict
from optbin.metrics import accuracy, em, rho


class Const:
    def __init__(self, labels):
        self.labels = np.asarray(labels)

    def predict(self, X):
        return self.labels


def test_examples():
    assert average_predict(3, 3) == 3.0
    assert average_predict(3, 4) == 3.5
    assert average_predict(1, 50) == 25.5
    assert average_predict([2, 7], [3, 7]).tolist() == [2.5, 7.0]


def test_half_integer_outputs():
    rng = np.random.default_rng(0)
    p = average_predict(rng.integers(1, 51, 1000), rng.integers(1, 51, 1000))
    assert np.all((2 * p) == np.round(2 * p)) and p.min() >= 1 and p.max() <= 50


def test_triangle_inequality_dominance():
    rng = np.random.default_rng(1)
    for _ in range(500):
        n = int(rng.integers(1, 200))
        c = rng.integers(1, 51, n)
        a = np.clip(c + rng.integers(-8, 9, n), 1, 50)
        g = np.clip(c + rng.integers(-8, 9, n), 1, 50)
        e_ens = em(c, average_predict(a, g))
        assert e_ens <= (em(c, a) + em(c, g)) / 2 + 1e-15
        assert (em(c, a) + em(c, g)) / 2 <= max(em(c, a), em(c, g)) + 1e-15


def test_agreeing_models_reproduce_metrics():
    c = np.array([3, 4, 9, 12])
    p = np.array([3, 6, 9, 8])
    ens = EnsembleModel(Const(p), Const(p)).predict(None)
    for f in (accuracy, em, rho):
        assert f(c, ens) == f(c, p)
