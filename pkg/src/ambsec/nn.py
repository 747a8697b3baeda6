"""Fully connected tanh network with a softmax output, trained by minibatch SGD.

Weights are stored as ``(fan_out, fan_in)`` matrices so each layer computes
``W x + b``; batches are rows, so in code that is ``X @ W.T + b``.  All
arithmetic is float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .numerics import Prng

DEFAULT_HIDDEN = (600, 1000, 600)
PROB_FLOOR = 1e-12
MODEL_MAGIC = b"AMBNN1"


@dataclass
class MlpModel:
    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.weights) != len(self.layer_sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and bias vector per layer transition")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            expect = (self.layer_sizes[i + 1], self.layer_sizes[i])
            if w.shape != expect or b.shape != (expect[0],):
                raise ValueError(f"layer {i}: weight {w.shape} / bias {b.shape}, expected {expect}")

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel(self.layer_sizes, [w.copy() for w in self.weights],
                        [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        """All parameters as one vector (layer by layer, weights then bias)."""
        return np.concatenate([p.ravel() for w, b in zip(self.weights, self.biases) for p in (w, b)])

    def assign_flat(self, theta: np.ndarray) -> "MlpModel":
        offset = 0
        for w, b in zip(self.weights, self.biases):
            for p in (w, b):
                p[...] = theta[offset:offset + p.size].reshape(p.shape)
                offset += p.size
        if offset != theta.size:
            raise ValueError(f"parameter vector has {theta.size} entries, model has {offset}")
        return self

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in (*self.weights, *self.biases))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for w, b in zip(self.weights, self.biases) for p in (w, b)])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 1000
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def init_model(rng: Prng, layer_sizes) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s < 1 for s in sizes):
        raise ValueError(f"invalid layer sizes {layer_sizes!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def _check_input(model: MlpModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.layer_sizes[0]:
        raise ValueError(f"input has {x.shape[-1]} features, model expects {model.layer_sizes[0]}")
    return x


def _forward_pass(model: MlpModel, X: np.ndarray) -> list[np.ndarray]:
    """Layer inputs/activations; the last entry is the output logits."""
    acts = [X]
    last = len(model.weights) - 1
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = acts[-1] @ w.T + b
        acts.append(z if i == last else np.tanh(z))
    return acts


def forward(model: MlpModel, x) -> np.ndarray:
    """Class probabilities for one input ``(d,)`` or a batch ``(n, d)``."""
    x = _check_input(model, x)
    return softmax(_forward_pass(model, x)[-1])


def loss(probs, label) -> float | np.ndarray:
    """Cross-entropy ``-ln p[label]`` (natural log), with ``p`` floored at 1e-12."""
    probs = np.asarray(probs, dtype=float)
    label = np.asarray(label, dtype=int)
    picked = np.take_along_axis(probs.reshape(-1, probs.shape[-1]), label.reshape(-1, 1), axis=1)
    out = -np.log(np.maximum(picked[:, 0], PROB_FLOOR))
    return float(out[0]) if probs.ndim == 1 else out


def loss_and_gradients(model: MlpModel, X, y) -> tuple[float, Gradients, np.ndarray]:
    """Mean batch loss, its exact gradient and the batch probabilities."""
    X = _check_input(model, np.atleast_2d(X))
    y = np.asarray(y, dtype=int).reshape(-1)
    if X.shape[0] == 0 or X.shape[0] != y.size:
        raise ValueError("batch must be nonempty with one label per row")
    acts = _forward_pass(model, X)
    probs = softmax(acts[-1])
    batch_loss = float(np.mean(loss(probs, y)))

    n = X.shape[0]
    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        grad_w[i] = delta.T @ acts[i]
        grad_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ model.weights[i]) * (1.0 - acts[i] ** 2)
    return batch_loss, Gradients(grad_w, grad_b), probs


def backward(model: MlpModel, X, y) -> Gradients:
    return loss_and_gradients(model, X, y)[1]


def sgd_step(model: MlpModel, grads: Gradients, lr: float) -> MlpModel:
    """In-place ``theta <- theta - lr * grad``."""
    for w, b, gw, gb in zip(model.weights, model.biases, grads.weights, grads.biases):
        if w.shape != gw.shape or b.shape != gb.shape:
            raise ValueError("gradient shapes do not match the model")
        w -= lr * gw
        b -= lr * gb
    return model


def minibatches(rng: Prng, n: int, batch_size: int):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def train(model: MlpModel, X, y, cfg: TrainConfig) -> tuple[MlpModel, list[EpochStats]]:
    """Minibatch SGD on ``(X, y)``, updating ``model`` in place.

    Each epoch visits a fresh seeded permutation of the data.  The reported
    epoch loss and accuracy are averaged over the epoch's batches, measured
    before each batch's update.
    """
    X = _check_input(model, np.atleast_2d(X))
    y = np.asarray(y, dtype=int).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = Prng(cfg.seed, 0)
    history = []
    for epoch in range(cfg.epochs):
        total_loss, correct = 0.0, 0
        for idx in minibatches(rng, X.shape[0], cfg.batch_size):
            batch_loss, grads, probs = loss_and_gradients(model, X[idx], y[idx])
            total_loss += batch_loss * idx.size
            correct += int(np.sum(np.argmax(probs, axis=1) == y[idx]))
            sgd_step(model, grads, cfg.learning_rate)
        history.append(EpochStats(epoch + 1, total_loss / X.shape[0], correct / X.shape[0]))
    return model, history


def predict(model: MlpModel, x) -> np.ndarray | int:
    """Most probable class; ``argmax`` returns the first index on ties, i.e. 0."""
    out = np.argmax(forward(model, x), axis=-1).astype(np.uint8)
    return int(out) if out.ndim == 0 else out


def mean_loss(model: MlpModel, X, y) -> float:
    return float(np.mean(loss(forward(model, np.atleast_2d(X)), np.asarray(y).reshape(-1))))


def accuracy(model: MlpModel, X, y) -> float:
    return float(np.mean(np.atleast_1d(predict(model, X)) == np.asarray(y).reshape(-1)))


# model file: magic, uint32 layer count, uint32 sizes, then per layer W (row-major) and b
def encode_model(model: MlpModel) -> bytes:
    sizes = model.layer_sizes
    out = bytearray(MODEL_MAGIC)
    out += struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes)
    for w, b in zip(model.weights, model.biases):
        out += np.ascontiguousarray(w, dtype="<f8").tobytes()
        out += np.ascontiguousarray(b, dtype="<f8").tobytes()
    return bytes(out)


def decode_model(data: bytes) -> MlpModel:
    if not data.startswith(MODEL_MAGIC):
        raise ValueError("not a model file (bad magic)")
    try:
        return _decode_layers(data)
    except struct.error as exc:
        raise ValueError(f"truncated model file: {exc}") from exc


def _decode_layers(data: bytes) -> MlpModel:
    offset = len(MODEL_MAGIC)
    (count,) = struct.unpack_from("<I", data, offset)
    offset += 4
    sizes = struct.unpack_from(f"<{count}I", data, offset)
    offset += 4 * count
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        w = np.frombuffer(data, "<f8", fan_in * fan_out, offset).reshape(fan_out, fan_in)
        offset += w.nbytes
        b = np.frombuffer(data, "<f8", fan_out, offset)
        offset += b.nbytes
        weights.append(w.astype(float))
        biases.append(b.astype(float))
    if offset != len(data):
        raise ValueError(f"model file has {len(data) - offset} trailing bytes")
    return MlpModel(sizes, weights, biases)


def save_model(model: MlpModel, path) -> None:
    Path(path).write_bytes(encode_model(model))


def load_model(path) -> MlpModel:
    return decode_model(Path(path).read_bytes())


class MLPDetector(ClassifierMixin, BaseEstimator):
    """scikit-learn style wrapper around the from-scratch network.

    ``fit`` accepts a ``warm_model`` to continue from (e.g. a meta-learned
    initialization); otherwise weights are Glorot-initialized from
    ``random_state``.
    """

    def __init__(self, hidden_layer_sizes=DEFAULT_HIDDEN, learning_rate=0.001,
                 batch_size=1000, epochs=30, random_state=0):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.random_state = random_state

    def fit(self, X, y, warm_model: MlpModel | None = None):
        X, y = check_X_y(X, y, dtype=np.float64)
        self.classes_ = np.array([0, 1])
        if warm_model is None:
            sizes = (X.shape[1], *self.hidden_layer_sizes, 2)
            model = init_model(Prng(self.random_state, 1), sizes)
        else:
            model = warm_model.copy()
        cfg = TrainConfig(self.learning_rate, self.batch_size, self.epochs, self.random_state)
        self.model_, self.history_ = train(model, X, y, cfg)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        return forward(self.model_, check_array(X, dtype=np.float64))

    def predict(self, X):
        check_is_fitted(self, "model_")
        return np.atleast_1d(predict(self.model_, check_array(X, dtype=np.float64)))

