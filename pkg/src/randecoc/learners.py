"""Deterministic binary trainers and differentiable multiclass substitutes.

The binary trainers start the output layer at zero and run fixed-order
gradient descent on the logistic loss written in terms of the margin
``z * score``. Flipping every label then produces exactly negated output
weights, bit for bit, which is what makes a relabeled classifier for ``-z``
the negation of the one for ``z``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .errors import DimensionError, TrainingError

KINDS = ("logistic", "mlp")
ARCHS = ("linear-softmax", "mlp")


@dataclass(frozen=True)
class TrainConfig:
    kind: str = "logistic"
    learning_rate: float = 0.5
    epochs: int = 200
    batch_size: int = 1 << 30  # >= n means full batch
    hidden_width: int = 32
    seed: int = 0
    activation: str = "relu"
    l2: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}")
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1 or self.hidden_width < 1:
            raise ValueError("learning_rate, epochs, batch_size and hidden_width must be positive")
        if self.activation not in ("relu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.l2 < 0:
            raise ValueError("l2 must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **kw) -> "TrainConfig":
        return TrainConfig(**{**asdict(self), **kw})


def _act(a, name):
    return np.maximum(a, 0.0) if name == "relu" else np.tanh(a)


def _act_grad(a, h, name):
    # relu subgradient at 0 is taken as 0
    return (a > 0).astype(a.dtype) if name == "relu" else 1.0 - h * h


def _params_to_json(params: dict) -> dict:
    return {k: np.asarray(v).tolist() for k, v in params.items()}


def _params_from_json(d: dict) -> dict:
    return {k: np.asarray(v, dtype=np.float64) for k, v in d.items()}


def _check_features(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise TrainingError("training data must be a non-empty (n, d) array")
    if not np.isfinite(X).all():
        raise TrainingError("training features contain NaN or inf")
    return X


def _batches(n, size):
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


# -- binary classifiers --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BinaryClassifier:
    kind: str
    params: dict = field(repr=False)
    activation: str = "relu"

    @property
    def input_dim(self) -> int:
        return self.params["w"].shape[0] if self.kind == "logistic" else self.params["W1"].shape[1]

    def score(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.input_dim:
            raise DimensionError(f"expected dimension {self.input_dim}, got {X.shape[1]}")
        p = self.params
        if self.kind == "logistic":
            s = X @ p["w"] + p["b"][0]
        else:
            h = _act(X @ p["W1"].T + p["b1"], self.activation)
            s = h @ p["v"] + p["c"][0]
        return s[0] if single else s

    def predict(self, X):
        """Sign of the score; a score of exactly 0 maps to +1."""
        s = self.score(X)
        out = np.where(s >= 0, 1, -1).astype(np.int8)
        return int(out) if np.ndim(out) == 0 else out

    def negated(self) -> "BinaryClassifier":
        p = dict(self.params)
        for k in (("w", "b") if self.kind == "logistic" else ("v", "c")):
            p[k] = -p[k]
        return BinaryClassifier(self.kind, p, self.activation)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "activation": self.activation, "params": _params_to_json(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "BinaryClassifier":
        return cls(d["kind"], _params_from_json(d["params"]), d.get("activation", "relu"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "BinaryClassifier":
        return cls.from_dict(json.loads(s))


def predict(f: BinaryClassifier, x):
    return f.predict(x)


def train_binary(X, z, config: TrainConfig) -> BinaryClassifier:
    """Train on sign labels ``z``; deterministic given data order and config."""
    X = _check_features(X)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (X.shape[0],) or not np.all(np.abs(z) == 1):
        raise TrainingError("labels must be a +1/-1 vector matching the data")
    if config.kind == "logistic":
        return _train_logistic(X, z, config)
    return _train_mlp_binary(X, z, config)


def _train_logistic(X, z, cfg):
    n, d = X.shape
    w = np.zeros(d)
    b = np.zeros(1)
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        for sl in _batches(n, cfg.batch_size):
            Xb, zb = X[sl], z[sl]
            m = zb * (Xb @ w + b[0])
            g = -zb * expit(-m) / Xb.shape[0]
            gw = Xb.T @ g
            if cfg.l2:
                gw = gw + cfg.l2 * w
            w = w - lr * gw
            b = b - lr * np.sum(g)
    return BinaryClassifier("logistic", {"w": w, "b": b}, cfg.activation)


def _init_hidden(d, width, seed):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF]))
    return rng.standard_normal((width, d)) * np.sqrt(2.0 / d)


def _train_mlp_binary(X, z, cfg):
    n, d = X.shape
    W1 = _init_hidden(d, cfg.hidden_width, cfg.seed)
    b1 = np.zeros(cfg.hidden_width)
    # zero output layer: label flip negates (v, c) and leaves the hidden layer untouched
    v = np.zeros(cfg.hidden_width)
    c = np.zeros(1)
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        for sl in _batches(n, cfg.batch_size):
            Xb, zb = X[sl], z[sl]
            a = Xb @ W1.T + b1
            h = _act(a, cfg.activation)
            m = zb * (h @ v + c[0])
            g = -zb * expit(-m) / Xb.shape[0]
            gv = h.T @ g
            da = np.outer(g, v) * _act_grad(a, h, cfg.activation)
            gW1 = da.T @ Xb
            if cfg.l2:
                gv = gv + cfg.l2 * v
                gW1 = gW1 + cfg.l2 * W1
            v = v - lr * gv
            c = c - lr * np.sum(g)
            W1 = W1 - lr * gW1
            b1 = b1 - lr * da.sum(axis=0)
    return BinaryClassifier("mlp", {"W1": W1, "b1": b1, "v": v, "c": c}, cfg.activation)


# -- substitute models ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SubstituteModel:
    arch: str
    params: dict = field(repr=False)
    n_classes: int = 2
    activation: str = "relu"

    @property
    def input_dim(self) -> int:
        return self.params["W" if self.arch == "linear-softmax" else "W1"].shape[1]

    def _forward(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.input_dim:
            raise DimensionError(f"expected dimension {self.input_dim}, got {X.shape[1]}")
        p = self.params
        if self.arch == "linear-softmax":
            return X, None, None, X @ p["W"].T + p["b"]
        a = X @ p["W1"].T + p["b1"]
        h = _act(a, self.activation)
        return X, a, h, h @ p["W2"].T + p["b2"]

    def logits(self, X) -> np.ndarray:
        return self._forward(X)[3]

    def predict(self, X) -> np.ndarray:
        return self.logits(X).argmax(axis=1)

    def loss(self, X, y) -> np.ndarray:
        """Per-sample softmax cross-entropy."""
        y = self._labels(y, np.atleast_2d(X).shape[0])
        ls = log_softmax(self.logits(X), axis=1)
        return -ls[np.arange(len(y)), y]

    def _labels(self, y, n):
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (n,))
        if y.min() < 0 or y.max() >= self.n_classes:
            raise DimensionError(f"class index out of range 0..{self.n_classes - 1}")
        return y

    def _backprop(self, a, h, dlogits):
        p = self.params
        if self.arch == "linear-softmax":
            return dlogits @ p["W"]
        dh = dlogits @ p["W2"]
        return (dh * _act_grad(a, h, self.activation)) @ p["W1"]

    def input_gradient(self, X, y, targeted=None) -> np.ndarray:
        """Gradient of the cross-entropy at ``(x, y)`` with respect to ``x``.

        With ``targeted`` set, returns the negative gradient of the loss toward
        the target class instead, so ascending it moves toward the target.
        """
        single = np.ndim(X) == 1
        X, a, h, logits = self._forward(X)
        n = X.shape[0]
        cls = self._labels(y if targeted is None else targeted, n)
        dlogits = softmax(logits, axis=1)
        dlogits[np.arange(n), cls] -= 1.0
        g = self._backprop(a, h, dlogits)
        if targeted is not None:
            g = -g
        return g[0] if single else g

    def logit_gradient(self, X, classes) -> np.ndarray:
        """Gradient of the logit of ``classes`` (one per row) with respect to the input."""
        X, a, h, logits = self._forward(X)
        cls = self._labels(classes, X.shape[0])
        onehot = np.zeros_like(logits)
        onehot[np.arange(X.shape[0]), cls] = 1.0
        return self._backprop(a, h, onehot)

    def to_dict(self) -> dict:
        return {"arch": self.arch, "n_classes": self.n_classes, "activation": self.activation,
                "params": _params_to_json(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "SubstituteModel":
        return cls(d["arch"], _params_from_json(d["params"]), d["n_classes"], d.get("activation", "relu"))


def train_substitute(X, y, arch: str, config: TrainConfig, n_classes: int | None = None) -> SubstituteModel:
    """Fit a multiclass substitute with fixed-order mini-batch gradient descent."""
    if arch not in ARCHS:
        raise ValueError(f"unknown architecture {arch!r}")
    X = _check_features(X)
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise TrainingError("labels must match the data")
    if y.min() < 0:
        raise TrainingError("class labels must be non-negative")
    if np.unique(y).size < 2:
        raise TrainingError("degenerate labels: need at least two classes")
    n_classes = int(y.max()) + 1 if n_classes is None else n_classes
    if y.max() >= n_classes:
        raise TrainingError("label exceeds n_classes")
    n, d = X.shape
    lr = config.learning_rate
    if arch == "linear-softmax":
        W = np.zeros((n_classes, d))
        b = np.zeros(n_classes)
        for _ in range(config.epochs):
            for sl in _batches(n, config.batch_size):
                Xb, yb = X[sl], y[sl]
                dl = softmax(Xb @ W.T + b, axis=1)
                dl[np.arange(len(yb)), yb] -= 1.0
                dl /= len(yb)
                W = W - lr * (dl.T @ Xb + config.l2 * W)
                b = b - lr * dl.sum(axis=0)
        return SubstituteModel(arch, {"W": W, "b": b}, n_classes, config.activation)

    width = config.hidden_width
    W1 = _init_hidden(d, width, config.seed)
    b1 = np.zeros(width)
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed) & 0xFFFFFFFFFFFFFFFF, 1]))
    W2 = rng.standard_normal((n_classes, width)) * np.sqrt(1.0 / width)
    b2 = np.zeros(n_classes)
    for _ in range(config.epochs):
        for sl in _batches(n, config.batch_size):
            Xb, yb = X[sl], y[sl]
            a = Xb @ W1.T + b1
            h = _act(a, config.activation)
            dl = softmax(h @ W2.T + b2, axis=1)
            dl[np.arange(len(yb)), yb] -= 1.0
            dl /= len(yb)
            da = (dl @ W2) * _act_grad(a, h, config.activation)
            W2 = W2 - lr * (dl.T @ h + config.l2 * W2)
            b2 = b2 - lr * dl.sum(axis=0)
            W1 = W1 - lr * (da.T @ Xb + config.l2 * W1)
            b1 = b1 - lr * da.sum(axis=0)
    return SubstituteModel(arch, {"W1": W1, "b1": b1, "W2": W2, "b2": b2}, n_classes, config.activation)
