"""Feed-forward ReLU network with a softmax head, trained by Adam on
categorical cross-entropy.  Pure numpy.

Class labels are 1-based at the API and 0-based at the output layer.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

FORMAT = "optbin.mlp"
VERSION = 1
PROB_FLOOR = 1e-12


def softmax(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class MlpModel:
    weights: list[np.ndarray]  # weights[k] has shape (fan_in, fan_out)
    biases: list[np.ndarray]
    # affine input standardisation applied before the first layer
    input_mean: np.ndarray | None = None
    input_scale: np.ndarray | None = None
    history: list[tuple[int, float, float]] = field(default_factory=list)  # epoch, train loss, val loss
    n_steps: int = 0

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("need one bias vector per weight matrix")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise ValueError(f"layer {k}: weight {W.shape} and bias {b.shape} do not match")
            if k and W.shape[0] != self.weights[k - 1].shape[1]:
                raise ValueError(f"layer {k} input size {W.shape[0]} does not chain")
        d = self.weights[0].shape[0]
        if self.input_mean is None:
            self.input_mean = np.zeros(d)
        if self.input_scale is None:
            self.input_scale = np.ones(d)
        if self.input_mean.shape != (d,) or self.input_scale.shape != (d,):
            raise ValueError("input standardisation must match the input size")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    @property
    def n_classes(self) -> int:
        return self.sizes[-1]

    def predict_proba(self, X):
        return forward(self, X)

    def predict(self, X):
        return predict_bin(self, X)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "sizes": self.sizes,
            "activations": ["relu"] * (len(self.weights) - 1) + ["softmax"],
            "input_mean": self.input_mean.tolist(),
            "input_scale": self.input_scale.tolist(),
            "weights": [W.ravel().tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError(f"not a {FORMAT} v{VERSION} document")
        sizes = d["sizes"]
        weights = [np.asarray(w, dtype=float).reshape(i, o) for w, i, o in zip(d["weights"], sizes, sizes[1:])]
        return cls(
            weights,
            [np.asarray(b, dtype=float) for b in d["biases"]],
            np.asarray(d["input_mean"], dtype=float),
            np.asarray(d["input_scale"], dtype=float),
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    def write_loss_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "val_loss"])
            for e, tr, va in self.history:
                w.writerow([e, repr(tr), repr(va)])


def init_model(sizes, rng) -> MlpModel:
    """He-style uniform init ``U(-sqrt(6/fan_in), +sqrt(6/fan_in))``, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        lim = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases)


def _forward_cache(model, X):
    h = (X - model.input_mean) / model.input_scale
    acts = [h]
    last = len(model.weights) - 1
    for k, (W, b) in enumerate(zip(model.weights, model.biases)):
        z = h @ W + b
        h = softmax(z) if k == last else np.maximum(z, 0.0)
        acts.append(h)
    return acts


def forward(model: MlpModel, x):
    """Class probabilities for one input vector or a batch of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.sizes[0]:
        raise ValueError(f"expected {model.sizes[0]} features, got {x.shape[-1]}")
    return _forward_cache(model, x)[-1]


def _class_index(true_class, n_classes):
    c = np.asarray(true_class)
    if not np.issubdtype(c.dtype, np.integer) or np.any((c < 1) | (c > n_classes)):
        raise ValueError(f"class labels must be integers in [1, {n_classes}]")
    return c - 1


def ce_loss(probs, true_class) -> float:
    """``-log p[true]`` (mean over rows for a batch), with ``p`` floored at 1e-12."""
    P = np.asarray(probs, dtype=float)
    idx = _class_index(true_class, P.shape[-1])
    if P.ndim == 1:
        return float(-np.log(max(P[idx], PROB_FLOOR)))
    p = P[np.arange(len(idx)), idx]
    return float(-np.mean(np.log(np.maximum(p, PROB_FLOOR))))


def gradients(model: MlpModel, X, y):
    """Analytic gradients of mean cross-entropy over the batch.

    Returns ``(loss, dW, db)`` with ``dW``/``db`` shaped like the model.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    idx = _class_index(np.atleast_1d(y), model.n_classes)
    acts = _forward_cache(model, X)
    P = acts[-1]
    loss = float(-np.mean(np.log(np.maximum(P[np.arange(len(idx)), idx], PROB_FLOOR))))

    delta = P.copy()
    delta[np.arange(len(idx)), idx] -= 1.0
    delta /= X.shape[0]
    dW = [None] * len(model.weights)
    db = [None] * len(model.weights)
    for k in range(len(model.weights) - 1, -1, -1):
        dW[k] = acts[k].T @ delta
        db[k] = delta.sum(axis=0)
        if k:
            delta = (delta @ model.weights[k].T) * (acts[k] > 0)
    return loss, dW, db


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class MlpTrainConfig:
    hidden: tuple[int, ...] = (128, 64)
    n_classes: int = 50
    learning_rate: float = 0.00012
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    validation_fraction: float = 0.1
    patience: int = 20
    standardize: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if not 0 <= self.validation_fraction < 1:
            raise ValueError("validation_fraction must lie in [0, 1)")


def train(X, y, cfg: MlpTrainConfig = MlpTrainConfig()) -> MlpModel:
    """Fit a network to features ``X`` and 1-based labels ``y``.

    With ``standardize`` the inputs are shifted and scaled by the training
    mean and standard deviation (constant columns keep scale 1); the affine
    map is stored in the model.  A seeded ``validation_fraction`` slice of the data is held out for early
    stopping (``patience`` epochs without validation improvement).  The model
    from the last epoch run is returned; ``model.history`` has per-epoch mean
    losses.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one label per row")
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    idx_all = _class_index(y, cfg.n_classes)

    rng = np.random.default_rng(cfg.seed)
    model = init_model([X.shape[1], *cfg.hidden, cfg.n_classes], rng)
    if cfg.standardize:
        sd = X.std(axis=0)
        model.input_mean = X.mean(axis=0)
        model.input_scale = np.where(sd > 1e-12, sd, 1.0)
    n_val = int(len(X) * cfg.validation_fraction)
    perm = rng.permutation(len(X))
    val, tr = perm[:n_val], np.sort(perm[n_val:])
    X_tr, y_tr = X[tr], idx_all[tr] + 1
    X_val, y_val = X[val], idx_all[val] + 1

    params = model.weights + model.biases
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    best, stale = np.inf, 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(X_tr))
        total = 0.0
        for s in range(0, len(order), cfg.batch_size):
            b = order[s : s + cfg.batch_size]
            loss, dW, db = gradients(model, X_tr[b], y_tr[b])
            opt.step(dW + db)
            total += loss * len(b)
        val_loss = ce_loss(forward(model, X_val), y_val) if n_val else float("nan")
        model.history.append((epoch, total / len(X_tr), val_loss))
        if n_val and cfg.patience:
            if val_loss < best - 1e-12:
                best, stale = val_loss, 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    log.info("early stop at epoch %d (best val loss %.5f)", epoch, best)
                    break
    model.n_steps = opt.t
    return model


def argmax_label(probs):
    """1-based argmax along the last axis; ties go to the lowest class."""
    out = np.argmax(np.asarray(probs), axis=-1) + 1
    return int(out) if np.ndim(out) == 0 else out


def predict_bin(model: MlpModel, x):
    return argmax_label(forward(model, x))
