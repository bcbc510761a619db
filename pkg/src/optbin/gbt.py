"""Multiclass gradient-boosted regression trees on softmax cross-entropy.

Each round computes per-sample residuals ``z - softmax(F)``, fits one
depth-limited regression tree per class to that class's residual column and
adds the tree outputs to the scores, scaled by the learning rate.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .mlp import PROB_FLOOR, argmax_label, softmax

log = logging.getLogger(__name__)

FORMAT = "optbin.gbt"
VERSION = 1
MIN_GAIN = 1e-12
FREQ_FLOOR = 1e-12


@dataclass
class RegressionTree:
    """Array-backed binary tree in preorder.

    ``feature[i] == -1`` marks a leaf.  Samples with ``x[feature] <= threshold``
    go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def depth(self) -> int:
        def d(i):
            return 0 if self.feature[i] < 0 else 1 + max(d(self.left[i]), d(self.right[i]))

        return d(0)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of ``X``."""
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return node
            r, n = rows[inner], node[inner]
            go_left = X[r, f[inner]] <= self.threshold[n]
            node[inner] = np.where(go_left, self.left[n], self.right[n])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_records(self) -> list[dict]:
        out = []
        for i in range(self.n_nodes):
            if self.feature[i] < 0:
                out.append({"leaf": float(self.value[i])})
            else:
                out.append({"feature": int(self.feature[i]), "threshold": float(self.threshold[i])})
        return out

    @classmethod
    def from_records(cls, recs) -> "RegressionTree":
        nodes = []

        def build(pos):
            i = len(nodes)
            r = recs[pos]
            nodes.append([-1, 0.0, -1, -1, 0.0])
            if "leaf" in r:
                nodes[i][4] = r["leaf"]
                return i, pos + 1
            nodes[i][0], nodes[i][1] = r["feature"], r["threshold"]
            nodes[i][2], pos = build(pos + 1)
            nodes[i][3], pos = build(pos)
            return i, pos

        build(0)
        a = list(zip(*nodes))
        return cls(
            np.array(a[0], dtype=np.int64),
            np.array(a[1], dtype=float),
            np.array(a[2], dtype=np.int64),
            np.array(a[3], dtype=np.int64),
            np.array(a[4], dtype=float),
        )


class _NodeView:
    """A node's samples sorted along every feature.

    ``order[f]`` lists the node's sample indices in ascending ``X[:, f]``;
    ``xs[f]`` holds the matching feature values.
    """

    __slots__ = ("order", "xs", "tied")

    def __init__(self, order, xs):
        self.order = order
        self.xs = xs
        self.tied = xs[:, 1:] <= xs[:, :-1]

    @classmethod
    def root(cls, X, presorted=None):
        if presorted is None:
            presorted = np.argsort(X, axis=0, kind="stable")
        order = np.ascontiguousarray(presorted.T)
        return cls(order, np.take_along_axis(X.T, order, axis=1))

    def split(self, goes_left):
        mask = goes_left[self.order]
        m_left = int(mask[0].sum())
        d = len(self.order)
        return (
            _NodeView(self.order[mask].reshape(d, m_left), self.xs[mask].reshape(d, m_left)),
            _NodeView(self.order[~mask].reshape(d, -1), self.xs[~mask].reshape(d, -1)),
        )


def _best_split(view, t):
    """Best squared-error split of one node as ``(gain, feature, threshold)``.

    Returns ``None`` when no threshold separates the node's samples.
    """
    d, m = view.order.shape
    ts = t[view.order]
    # centring keeps the gain free of cancellation noise
    ts -= ts[0].mean()
    cs = np.cumsum(ts, axis=1)
    total = cs[:, -1:]
    n_left = np.arange(1.0, m)
    left = cs[:, :-1]
    right = total - left
    right *= right
    right /= m - n_left
    gain = left * left
    gain /= n_left
    gain += right
    gain -= total * total / m
    gain[view.tied] = -np.inf
    k = int(np.argmax(gain))
    f, p = divmod(k, m - 1)
    if not np.isfinite(gain[f, p]):
        return None
    lo, hi = view.xs[f, p], view.xs[f, p + 1]
    thr = 0.5 * (lo + hi)
    if not lo <= thr < hi:
        thr = lo
    return float(gain[f, p]), f, thr


def fit_tree(X, targets, max_depth: int = 3, root=None) -> RegressionTree:
    """Greedy least-squares regression tree.

    A node is split on the (feature, midpoint threshold) pair with the largest
    reduction in squared error; it stays a leaf when it has fewer than two
    samples, is at ``max_depth``, or the best reduction is ``<= 1e-12``.
    Leaves hold the mean target of their samples.  Ties in reduction go to the
    lowest feature index, then the lowest threshold.

    ``root`` may carry a precomputed sorted view of ``X`` for reuse across
    many fits on the same features.
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(targets, dtype=float)
    if X.ndim != 2 or len(X) != len(t) or len(t) == 0:
        raise ValueError("need a non-empty 2-D X with one target per row")
    if root is None:
        root = _NodeView.root(X)
    n = len(t)
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(view, depth):
        i = len(feature)
        samples = view.order[0]
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(float(t[samples].mean()))
        if depth >= max_depth or len(samples) < 2:
            return i
        best = _best_split(view, t)
        if best is None or best[0] <= MIN_GAIN:
            return i
        _, f, thr = best
        goes_left = np.zeros(n, dtype=bool)
        goes_left[samples[X[samples, f] <= thr]] = True
        lview, rview = view.split(goes_left)
        feature[i], threshold[i] = f, thr
        left[i] = grow(lview, depth + 1)
        right[i] = grow(rview, depth + 1)
        return i

    grow(root, 0)
    return RegressionTree(
        np.array(feature, dtype=np.int64),
        np.array(threshold, dtype=float),
        np.array(left, dtype=np.int64),
        np.array(right, dtype=np.int64),
        np.array(value, dtype=float),
    )


def initial_scores(labels, n_classes: int) -> np.ndarray:
    """Constant scores minimising total cross-entropy: log class frequencies.

    Frequencies are floored at 1e-12 so absent classes get a finite score.
    """
    y = np.asarray(labels)
    if y.size == 0:
        raise ValueError("need at least one label")
    freq = np.bincount(y - 1, minlength=n_classes)[:n_classes] / y.size
    return np.log(np.maximum(freq, FREQ_FLOOR))


def residuals(scores, true_class) -> np.ndarray:
    """Negative gradient of cross-entropy w.r.t. the scores: ``onehot - softmax``.

    Works on one score vector or a batch of rows; labels are 1-based.
    """
    F = np.asarray(scores, dtype=float)
    P = softmax(F)
    c = np.asarray(true_class) - 1
    if F.ndim == 1:
        P[c] -= 1.0
    else:
        P[np.arange(len(c)), c] -= 1.0
    return -P


def _mean_ce(F, idx):
    P = softmax(F)
    return float(-np.mean(np.log(np.maximum(P[np.arange(len(idx)), idx], PROB_FLOOR))))


@dataclass
class GbtConfig:
    n_rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.3
    n_classes: int = 50
    line_search: bool = False

    def __post_init__(self):
        if self.n_rounds < 0 or self.max_depth < 0:
            raise ValueError("n_rounds and max_depth must be non-negative")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")


@dataclass
class GbtModel:
    base_scores: np.ndarray
    rounds: list[list[RegressionTree]] = field(default_factory=list)  # [round][class]
    learning_rate: float = 0.3
    steps: list[float] = field(default_factory=list)  # per-round multiplier
    history: list[float] = field(default_factory=list)  # mean train CE after each round

    @property
    def n_classes(self) -> int:
        return len(self.base_scores)

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        F = np.tile(self.base_scores, (len(X), 1))
        for step, trees in zip(self.steps, self.rounds):
            for k, tree in enumerate(trees):
                F[:, k] += self.learning_rate * step * tree.predict(X)
        return F

    def predict_proba(self, X):
        return softmax(self.decision_function(X))

    def predict(self, X):
        return predict_bin(self, X)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "n_classes": self.n_classes,
            "learning_rate": self.learning_rate,
            "base_scores": self.base_scores.tolist(),
            "steps": list(self.steps),
            "rounds": [[t.to_records() for t in trees] for trees in self.rounds],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbtModel":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError(f"not a {FORMAT} v{VERSION} document")
        rounds = [[RegressionTree.from_records(t) for t in trees] for trees in d["rounds"]]
        return cls(np.asarray(d["base_scores"], dtype=float), rounds, d["learning_rate"], list(d["steps"]))

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)


def boost(X, labels, cfg: GbtConfig = GbtConfig()) -> GbtModel:
    """Train a boosted-tree classifier on features ``X`` and 1-based labels.

    With ``cfg.line_search`` each round's trees are additionally scaled by the
    multiplier minimising training cross-entropy before shrinkage.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be 2-D with one label per row")
    if len(y) == 0:
        raise ValueError("cannot boost on an empty dataset")
    if np.any((y < 1) | (y > cfg.n_classes)):
        raise ValueError(f"labels must lie in [1, {cfg.n_classes}]")
    idx = y - 1
    model = GbtModel(initial_scores(y, cfg.n_classes), learning_rate=cfg.learning_rate)
    F = np.tile(model.base_scores, (len(X), 1))
    root = _NodeView.root(X)
    for m in range(cfg.n_rounds):
        R = residuals(F, y)
        trees = [fit_tree(X, R[:, k], cfg.max_depth, root) for k in range(cfg.n_classes)]
        H = np.column_stack([t.predict(X) for t in trees])
        step = 1.0
        if cfg.line_search:
            step = float(minimize_scalar(lambda a: _mean_ce(F + a * H, idx), bounds=(0.0, 10.0), method="bounded").x)
        F += cfg.learning_rate * step * H
        model.rounds.append(trees)
        model.steps.append(step)
        model.history.append(_mean_ce(F, idx))
        log.debug("round %d: train CE %.5f", m + 1, model.history[-1])
    return model


def predict_bin(model: GbtModel, x):
    """Argmax of the softmax scores (1-based); ties go to the lowest class."""
    x = np.asarray(x, dtype=float)
    out = argmax_label(model.decision_function(x))
    return int(out[0]) if x.ndim == 1 else out
