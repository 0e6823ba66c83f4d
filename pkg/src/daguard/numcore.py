"""Dense feed-forward networks with hand-written backpropagation.

Everything is float64 numpy. A 2-D ``np.ndarray`` plays the role of the
row-major matrix type; one sample per row.

Random streams come from numpy's PCG64 seeded through ``SeedSequence``,
which is specified bit-for-bit and platform independent.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import FormatError, ShapeError, StateError

PROB_FLOOR = 1e-12
MODEL_MAGIC = b"DAGM"
MODEL_VERSION = 1


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams, so one consumer never shifts another's draws."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def as_mat(x, cols: Optional[int] = None) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if cols is None or arr.size == cols else arr.reshape(-1, cols)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {arr.shape}")
    if cols is not None and arr.shape[1] != cols:
        raise ShapeError(f"expected {cols} columns, got {arr.shape[1]}")
    return arr


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(probs: np.ndarray, labels: np.ndarray) -> float:
    picked = probs[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(picked, PROB_FLOOR)).mean())


@dataclass
class MlpModel:
    """ReLU hidden layers, softmax output.

    ``weights[i]`` has shape ``(layer_dims[i], layer_dims[i+1])``. The
    activations of hidden layer ``feature_layer`` are the model's
    intermediate representation.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    feature_layer: int = -1

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeError("weights and biases must be non-empty and paired")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ShapeError(f"layer {i}: weight {w.shape} / bias {b.shape} mismatch")
            if i and self.weights[i - 1].shape[1] != w.shape[0]:
                raise ShapeError(f"layer {i} input width does not match previous output")
        if self.n_hidden:
            if self.feature_layer < 0:
                self.feature_layer += self.n_hidden
            if not 0 <= self.feature_layer < self.n_hidden:
                raise ShapeError(f"feature_layer {self.feature_layer} out of range")

    @property
    def layer_dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def n_hidden(self) -> int:
        return len(self.weights) - 1

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "MlpModel":
        return MlpModel([w.copy() for w in self.weights], [b.copy() for b in self.biases], self.feature_layer)

    def predict_proba(self, x) -> np.ndarray:
        return forward(self, x).probs

    def features(self, x, layer: Optional[int] = None) -> np.ndarray:
        layer = self.feature_layer if layer is None else layer
        return forward(self, x).activations[layer + 1]


def init_mlp(layer_dims: Sequence[int], rng: np.random.Generator, feature_layer: int = -1) -> MlpModel:
    """He-normal weights, zero biases."""
    if len(layer_dims) < 2:
        raise ShapeError("need at least input and output widths")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(weights, biases, feature_layer)


@dataclass
class ForwardResult:
    activations: list[np.ndarray]  # [input, hidden_1, ..., hidden_H]
    logits: np.ndarray
    probs: np.ndarray

    def feature(self, layer: int) -> np.ndarray:
        return self.activations[layer + 1]


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray = field(repr=False)

    def norm(self) -> float:
        total = sum(float((g**2).sum()) for g in self.weights + self.biases)
        return float(np.sqrt(total))


def forward(model: MlpModel, batch) -> ForwardResult:
    x = as_mat(batch)
    if x.shape[1] != model.layer_dims[0]:
        raise ShapeError(f"batch has {x.shape[1]} columns, model expects {model.layer_dims[0]}")
    acts = [x]
    h = x
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        h = relu(h @ w + b)
        acts.append(h)
    logits = h @ model.weights[-1] + model.biases[-1]
    return ForwardResult(acts, logits, softmax(logits))


def backward(
    model: MlpModel,
    fwd: Optional[ForwardResult],
    labels: Optional[np.ndarray] = None,
    extra_grad_on_feature: Optional[np.ndarray] = None,
) -> Gradients:
    """Gradients of mean cross-entropy (when ``labels`` given) plus an injected
    gradient on the feature-layer activations.

    With ``labels=None`` only the injected term propagates, which is how
    unlabeled target batches receive MMD, reconstruction or adversarial signal.
    """
    if fwd is None:
        raise StateError("backward called without a forward pass")
    n = fwd.activations[0].shape[0]
    if extra_grad_on_feature is not None:
        expected = fwd.feature(model.feature_layer).shape
        if extra_grad_on_feature.shape != expected:
            raise ShapeError(f"extra gradient shape {extra_grad_on_feature.shape} != feature shape {expected}")

    if labels is not None:
        labels = np.asarray(labels, dtype=np.int64)
        if labels.shape != (n,):
            raise ShapeError("one label per row required")
        delta = fwd.probs.copy()
        delta[np.arange(n), labels] -= 1.0
        delta /= n
    else:
        delta = np.zeros_like(fwd.probs)

    n_layers = len(model.weights)
    gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
    for layer in range(n_layers - 1, -1, -1):
        a_in = fwd.activations[layer]
        gw[layer] = a_in.T @ delta
        gb[layer] = delta.sum(axis=0)
        grad_in = delta @ model.weights[layer].T
        if layer == 0:
            break
        hidden = layer - 1
        if hidden == model.feature_layer and extra_grad_on_feature is not None:
            grad_in = grad_in + extra_grad_on_feature
        delta = grad_in * (a_in > 0.0)
    return Gradients(gw, gb, grad_in)


def loss(model: MlpModel, batch, labels) -> float:
    return cross_entropy(forward(model, batch).probs, np.asarray(labels))


def sgd_step(
    model: MlpModel,
    grads: Gradients,
    learning_rate: float,
    layers: Optional[Sequence[int]] = None,
) -> MlpModel:
    """Return a new model with ``w - lr * g`` applied to the chosen layers (all by default)."""
    chosen = range(len(model.weights)) if layers is None else layers
    new = model.copy()
    for i in chosen:
        if grads.weights[i].shape != model.weights[i].shape or grads.biases[i].shape != model.biases[i].shape:
            raise ShapeError(f"gradient shape mismatch at layer {i}")
        new.weights[i] = model.weights[i] - learning_rate * grads.weights[i]
        new.biases[i] = model.biases[i] - learning_rate * grads.biases[i]
    return new


def accuracy(model: MlpModel, x, labels) -> float:
    labels = np.asarray(labels)
    if len(labels) == 0:
        return float("nan")
    return float((forward(model, x).probs.argmax(axis=1) == labels).mean())


# -- model files -----------------------------------------------------------
#
# layout: b"DAGM" | u32 version | u32 header length | JSON header | float64 LE params
# params are, per layer, the weight matrix row-major followed by the bias.


def save_model(path, model: MlpModel, meta: Optional[dict] = None) -> None:
    header = {
        "version": MODEL_VERSION,
        "layer_dims": model.layer_dims,
        "feature_layer": model.feature_layer,
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<II", MODEL_VERSION, len(blob)))
        f.write(blob)
        for w, b in zip(model.weights, model.biases):
            f.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_model(path) -> tuple[MlpModel, dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MODEL_MAGIC or len(raw) < 12:
        raise FormatError(f"{path}: not a model file")
    version, hlen = struct.unpack("<II", raw[4:12])
    if version != MODEL_VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    header = json.loads(raw[12 : 12 + hlen])
    dims = header["layer_dims"]
    offset = 12 + hlen
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        count = fan_in * fan_out + fan_out
        if offset + 8 * count > len(raw):
            raise FormatError(f"{path}: truncated parameters")
        flat = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).astype(np.float64)
        weights.append(flat[: fan_in * fan_out].reshape(fan_in, fan_out).copy())
        biases.append(flat[fan_in * fan_out :].copy())
        offset += 8 * count
    if offset != len(raw):
        raise FormatError(f"{path}: trailing bytes after parameters")
    return MlpModel(weights, biases, header["feature_layer"]), header.get("meta", {})
