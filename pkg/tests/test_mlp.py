import json
import math

import numpy as np
import pytest

from optbin.mlp import (
    MlpModel,
    MlpTrainConfig,
    argmax_label,
    ce_loss,
    forward,
    gradients,
    init_model,
    predict_bin,
    softmax,
    train,
)
from helpers import clustered_toy


def tiny_net(seed=0, sizes=(4, 2, 3)):
    model = init_model(list(sizes), np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 100)
    for b in model.biases:
        b[:] = rng.normal(0, 0.3, b.shape)
    return model


def separable_toy(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, 2))
    y = np.where(X[:, 0] < -0.33, 1, np.where(X[:, 0] < 0.33, 2, 3))
    return X, y


def py_forward(model, x):
    h = list(x)
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = [b[j] + sum(h[i] * W[i, j] for i in range(len(h))) for j in range(len(b))]
        if k == last:
            m = max(z)
            e = [math.exp(v - m) for v in z]
            return [v / sum(e) for v in e]
        h = [max(v, 0.0) for v in z]


def test_softmax_stability():
    for scale in (1.0, 1000.0, 1e4):
        z = np.random.default_rng(1).normal(size=(5, 50)) * scale
        p = softmax(z)
        assert np.all(np.isfinite(p))
        assert np.allclose(p.sum(axis=1), 1.0, atol=1e-9)
    assert softmax([1e4, 0.0]).tolist() == [1.0, 0.0]


def test_forward_matches_python_oracle():
    model = tiny_net(3)
    x = [0.2, -1.3, 0.7, 2.0]
    assert forward(model, x).tolist() == pytest.approx(py_forward(model, x), abs=1e-14)
    with pytest.raises(ValueError):
        forward(model, [1.0, 2.0])


def test_zero_weights_give_uniform_output():
    model = MlpModel([np.zeros((22, 128)), np.zeros((128, 64)), np.zeros((64, 50))],
                     [np.zeros(128), np.zeros(64), np.zeros(50)])
    p = forward(model, np.ones(22))
    assert np.allclose(p, 1 / 50, atol=1e-15)
    assert predict_bin(model, np.ones(22)) == 1


def test_ce_loss_examples():
    assert ce_loss(np.full(50, 1 / 50), 7) == pytest.approx(3.912023, abs=1e-6)
    assert ce_loss([0.25, 0.75], 1) == pytest.approx(1.3862944, abs=1e-7)
    assert ce_loss([0.0, 1.0], 1) == pytest.approx(-math.log(1e-12))
    with pytest.raises(ValueError):
        ce_loss([0.5, 0.5], 3)


def test_output_bias_gradient_identity():
    model = tiny_net(5)
    x = np.array([[0.3, 0.1, -0.4, 1.0]])
    _, _, db = gradients(model, x, [2])
    expected = forward(model, x[0]) - np.eye(3)[1]
    assert np.allclose(db[-1], expected, atol=1e-15)


def test_duplicate_sample_same_gradient():
    model = tiny_net(6)
    x = np.array([[0.3, 0.1, -0.4, 1.0]])
    _, dW1, db1 = gradients(model, x, [3])
    _, dW2, db2 = gradients(model, np.vstack([x, x]), [3, 3])
    for a, b in zip(dW1 + db1, dW2 + db2):
        assert np.allclose(a, b, atol=1e-15)


def max_fd_rel_error(model, X, y, h=1e-5):
    _, dW, db = gradients(model, X, y)
    worst = 0.0
    for params, grads in ((model.weights, dW), (model.biases, db)):
        for p, g in zip(params, grads):
            for i in np.ndindex(p.shape):
                old = p[i]
                p[i] = old + h
                up = ce_loss(forward(model, X), y)
                p[i] = old - h
                down = ce_loss(forward(model, X), y)
                p[i] = old
                num = (up - down) / (2 * h)
                worst = max(worst, abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-6))
    return worst


def test_gradient_check_4_2_3():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(6, 4))
    y = np.array([1, 2, 3, 1, 3, 2])
    assert max_fd_rel_error(tiny_net(7), X, y) <= 1e-4


def test_train_separable_toy():
    X, y = clustered_toy()
    model = train(X, y, MlpTrainConfig(n_classes=3, epochs=200))
    assert np.mean(predict_bin(model, X) == y) >= 0.95
    losses = [tr for _, tr, _ in model.history]
    assert losses[-1] <= losses[0] + 1e-6


def test_train_deterministic():
    X, y = separable_toy(80)
    cfg = MlpTrainConfig(hidden=(8,), n_classes=3, epochs=5, seed=3)
    a, b = train(X, y, cfg), train(X, y, cfg)
    assert a.history == b.history
    for u, v in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.array_equal(u, v)


def test_one_epoch_one_batch_one_step():
    X, y = separable_toy(20)
    cfg = MlpTrainConfig(hidden=(4,), n_classes=3, epochs=1, batch_size=32, validation_fraction=0.0)
    model = train(X, y, cfg)
    assert model.n_steps == 1 and len(model.history) == 1


def test_train_errors():
    with pytest.raises(ValueError):
        train(np.zeros((0, 2)), np.zeros(0, dtype=int))
    with pytest.raises(ValueError):
        train(np.zeros((3, 2)), np.array([1, 2, 51]))


def test_early_stopping_halts():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 3))
    y = rng.integers(1, 4, 60)  # pure noise: validation loss stops improving
    cfg = MlpTrainConfig(hidden=(32,), n_classes=3, epochs=500, learning_rate=0.01, patience=5)
    assert len(train(X, y, cfg).history) < 500


def test_argmax_tie_rule():
    assert argmax_label([0.1, 0.7, 0.2]) == 2
    assert argmax_label([0.5, 0.5]) == 1
    assert argmax_label(np.full(50, 0.02)) == 1
    assert argmax_label([[0.2, 0.8], [0.6, 0.4]]).tolist() == [2, 1]


def test_serialization_round_trip(tmp_path):
    X, y = separable_toy(40)
    model = train(X, y, MlpTrainConfig(hidden=(5,), n_classes=3, epochs=3))
    model.save(tmp_path / "m.json")
    back = MlpModel.from_dict(json.loads((tmp_path / "m.json").read_text()))
    assert np.array_equal(back.predict_proba(X), model.predict_proba(X))
    model.write_loss_csv(tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss" and len(lines) == 4
    with pytest.raises(ValueError):
        MlpModel.from_dict({"format": "other"})
