"""Feed-forward classifier substrate operating on one flat parameter vector.

Parameters are laid out layer by layer: a row-major ``(fan_in, fan_out)``
weight block followed by ``fan_out`` biases. Everything that adds noise to,
projects, or serialises a classifier works on that flat vector.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from learncert import kernels, rng
from learncert.errors import CorruptFileError, DimensionError, DivergenceError, HashMismatchError, NumericalError


@dataclass(frozen=True)
class ModelSpec:
    layer_widths: tuple[int, ...] = (64, 128, 10)
    activation: str = "relu"

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        object.__setattr__(self, "layer_widths", widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"layer_widths must hold at least two positive sizes, got {widths}")
        if self.activation not in kernels.ACTIVATIONS:
            raise ValueError(f"activation must be one of {sorted(kernels.ACTIVATIONS)}")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def num_classes(self) -> int:
        return self.layer_widths[-1]

    @property
    def param_count(self) -> int:
        w = self.layer_widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))

    def layers(self):
        """Yield ``(weight_slice, bias_slice, fan_in, fan_out)`` per layer."""
        offset = 0
        for fan_in, fan_out in zip(self.layer_widths[:-1], self.layer_widths[1:]):
            w = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b = slice(offset, offset + fan_out)
            offset += fan_out
            yield w, b, fan_in, fan_out

    def digest(self) -> bytes:
        text = ",".join(map(str, self.layer_widths)) + "|" + self.activation
        return hashlib.blake2b(text.encode(), digest_size=16).digest()


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 128
    steps: int = 300
    weight_decay: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")


def check_params(theta: np.ndarray, spec: ModelSpec) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.ndim != 1 or theta.shape[0] != spec.param_count:
        actual = theta.shape[0] if theta.ndim == 1 else theta.shape
        raise DimensionError("parameter vector length", spec.param_count, actual)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("parameter vector contains non-finite entries")
    return theta


def _check_batch(x: np.ndarray, spec: ModelSpec) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionError("sample width", spec.input_dim, x.shape[-1] if x.ndim else None)
    if x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    return x


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases."""
    gen = rng.stream(seed, "init")
    theta = np.zeros(spec.param_count)
    for w, _, fan_in, fan_out in spec.layers():
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        theta[w] = gen.uniform(-limit, limit, size=fan_in * fan_out)
    return theta


def forward(theta: np.ndarray, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    theta = check_params(theta, spec)
    x = _check_batch(x, spec)
    return kernels.mlp_logits(theta, spec.layer_widths, kernels.ACTIVATIONS[spec.activation], x)


def predict(theta: np.ndarray, spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Argmax class per sample; ties go to the lowest class index."""
    return kernels.argmax_rows(forward(theta, spec, x))


def accuracy(theta: np.ndarray, spec: ModelSpec, data) -> float:
    if data.samples.shape[0] == 0:
        raise ValueError("accuracy of an empty dataset is undefined")
    theta = check_params(theta, spec)
    x = _check_batch(data.samples, spec)
    hits = kernels.mlp_count_correct(theta, spec.layer_widths, kernels.ACTIVATIONS[spec.activation], x, data.labels)
    return hits / x.shape[0]


def _backprop(theta, spec, x, y, want_input):
    act = spec.activation
    hs = [x]
    pre = []
    h = x
    n_layers = len(spec.layer_widths) - 1
    for i, (w, b, fan_in, fan_out) in enumerate(spec.layers()):
        z = h @ theta[w].reshape(fan_in, fan_out) + theta[b]
        if i < n_layers - 1:
            pre.append(z)
            h = np.maximum(z, 0.0) if act == "relu" else np.tanh(z)
            hs.append(h)
        else:
            h = z
    logits = h
    batch = x.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_prob = shifted - log_norm[:, None]
    rows = np.arange(batch)
    loss = float(-log_prob[rows, y].mean())

    delta = np.exp(log_prob)
    delta[rows, y] -= 1.0
    delta /= batch

    grad = np.empty_like(theta)
    layers = list(spec.layers())
    for i in range(n_layers - 1, -1, -1):
        w, b, fan_in, fan_out = layers[i]
        grad[w] = (hs[i].T @ delta).reshape(-1)
        grad[b] = delta.sum(axis=0)
        if i == 0 and not want_input:
            break
        delta = delta @ theta[w].reshape(fan_in, fan_out).T
        if i > 0:
            if act == "relu":
                delta *= pre[i - 1] > 0
            else:
                delta *= 1.0 - hs[i] ** 2
    grad_x = delta if want_input else None
    return loss, grad, grad_x


def _check_labels(y, batch: int, spec: ModelSpec) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (batch,):
        raise DimensionError("label count", batch, y.shape)
    if y.min() < 0 or y.max() >= spec.num_classes:
        raise ValueError(f"labels must lie in 0..{spec.num_classes - 1}")
    return y


def loss_and_grad(theta: np.ndarray, spec: ModelSpec, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. ``theta``."""
    theta = check_params(theta, spec)
    x = _check_batch(x, spec)
    y = _check_labels(y, x.shape[0], spec)
    loss, grad, _ = _backprop(theta, spec, x, y, want_input=False)
    return loss, grad


def loss_and_input_grad(theta: np.ndarray, spec: ModelSpec, x: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. each input row (shape of ``x``)."""
    theta = check_params(theta, spec)
    x = _check_batch(x, spec)
    y = _check_labels(y, x.shape[0], spec)
    loss, _, grad_x = _backprop(theta, spec, x, y, want_input=True)
    return loss, grad_x


def sgd_step(theta: np.ndarray, grad: np.ndarray, cfg: TrainConfig, velocity: np.ndarray | None = None,
             learning_rate: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """One heavy-ball step; weight decay enters as an L2 term on the gradient.

    ``v <- momentum * v + (grad + weight_decay * theta)``, ``theta <- theta - lr * v``.
    Inputs are left untouched.
    """
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != np.shape(theta):
        raise DimensionError("gradient length", np.shape(theta), grad.shape)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("gradient contains non-finite entries")
    lr = cfg.learning_rate if learning_rate is None else learning_rate
    g = grad + cfg.weight_decay * theta if cfg.weight_decay else grad
    v = g.copy() if velocity is None else cfg.momentum * velocity + g
    return theta - lr * v, v


class BatchSampler:
    """Deterministic mini-batches: a fresh seeded permutation every epoch."""

    def __init__(self, n: int, batch_size: int, seed: int, label: str = "batches"):
        if batch_size > n:
            raise ValueError(f"batch_size {batch_size} exceeds dataset size {n}")
        self.n = n
        self.batch_size = batch_size
        self.seed = seed
        self.label = label
        self.epoch = 0
        self._order = np.empty(0, dtype=np.int64)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self._order.shape[0]:
            self._order = rng.stream(self.seed, self.label, self.epoch).permutation(self.n)
            self.epoch += 1
            self._pos = 0
        idx = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return idx


def train(spec: ModelSpec, data, cfg: TrainConfig, init: np.ndarray | None = None) -> np.ndarray:
    """Mini-batch SGD with momentum on mean cross-entropy."""
    n = data.samples.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.samples.shape[1] != spec.input_dim:
        raise DimensionError("sample width", spec.input_dim, data.samples.shape[1])
    theta = init_params(spec, cfg.seed) if init is None else check_params(init, spec).copy()
    sampler = BatchSampler(n, min(cfg.batch_size, n), cfg.seed)
    velocity = None
    for step in range(cfg.steps):
        idx = sampler.next()
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = _backprop(theta, spec, data.samples[idx], data.labels[idx], want_input=False)[:2]
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergenceError(step)
        theta, velocity = sgd_step(theta, grad, cfg, velocity)
    return theta


# --- serialisation -------------------------------------------------------

PARAM_MAGIC = b"LCPV"
PARAM_VERSION = 1
_PARAM_HEADER = struct.Struct("<4sIQ16s")


def save_params(path, theta: np.ndarray, spec: ModelSpec) -> None:
    theta = check_params(theta, spec)
    header = _PARAM_HEADER.pack(PARAM_MAGIC, PARAM_VERSION, theta.shape[0], spec.digest())
    Path(path).write_bytes(header + theta.astype("<f8").tobytes())


def load_params(path, spec: ModelSpec | None = None) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _PARAM_HEADER.size:
        raise CorruptFileError(f"{path}: truncated parameter header")
    magic, version, d, digest = _PARAM_HEADER.unpack_from(raw)
    if magic != PARAM_MAGIC or version != PARAM_VERSION:
        raise CorruptFileError(f"{path}: not a parameter file (magic {magic!r}, version {version})")
    if len(raw) != _PARAM_HEADER.size + 8 * d:
        raise CorruptFileError(f"{path}: expected {d} parameters, payload holds {(len(raw) - _PARAM_HEADER.size) / 8}")
    if spec is not None and digest != spec.digest():
        raise HashMismatchError(f"{path}: parameters were saved for a different model spec")
    return np.frombuffer(raw, dtype="<f8", offset=_PARAM_HEADER.size).astype(np.float64)


def param_digest(theta: np.ndarray, spec: ModelSpec) -> str:
    h = hashlib.blake2b(digest_size=16)
    h.update(spec.digest())
    h.update(np.ascontiguousarray(theta, dtype="<f8").tobytes())
    return h.hexdigest()
