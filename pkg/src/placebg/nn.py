"""Fully connected autoencoder written directly against numpy.

Forward pass, backpropagation for a per-pixel mean-squared-error training
loss, plain mini-batch SGD, and the L1 reconstruction error used for scoring.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, ShapeError
from .imaging import check_same_shape
from .normalizer import Normalizer

ACTIVATIONS = ("relu", "sigmoid", "tanh", "linear")
INPUT_OFFSET = 0.5


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))
    if name == "tanh":
        return np.tanh(z)
    if name == "linear":
        return z
    raise InvalidInputError(f"unknown activation {name!r}")


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    # derivative expressed through the pre-activation z and output a
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "sigmoid":
        return a * (1.0 - a)
    if name == "tanh":
        return 1.0 - a * a
    return np.ones_like(z)


@dataclass
class TrainConfig:
    learning_rate: float = 0.5
    epochs: int = 200
    batch_size: int = 8
    seed: int = 0
    weight_init_scale: float = 1.0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise InvalidInputError("learning_rate must be nonnegative")
        if self.epochs < 1 or self.batch_size < 1:
            raise InvalidInputError("epochs and batch_size must be positive")
        if not self.weight_init_scale > 0:
            raise InvalidInputError("weight_init_scale must be positive")


@dataclass
class Autoencoder:
    """Symmetric dense autoencoder.

    ``weights[l]`` has shape ``(layer_sizes[l+1], layer_sizes[l])`` and
    ``activations[l]`` is applied after layer transition ``l``.
    """

    input_shape: tuple[int, int]
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    normalizer: Normalizer = field(default_factory=Normalizer)
    id: int = 0

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        validate_autoencoder(self)

    @property
    def input_size(self) -> int:
        return self.layer_sizes[0]

    def copy(self) -> Autoencoder:
        return Autoencoder(
            self.input_shape,
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            list(self.activations),
            self.normalizer.copy(),
            self.id,
        )

    def params(self) -> list[np.ndarray]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


def validate_autoencoder(ae: Autoencoder) -> None:
    sizes = ae.layer_sizes
    if len(sizes) < 3 or any(s < 1 for s in sizes):
        raise InvalidInputError(f"invalid layer sizes {sizes}")
    if sizes != sizes[::-1]:
        raise InvalidInputError(f"layer sizes must be palindromic, got {sizes}")
    if ae.input_shape[0] * ae.input_shape[1] != sizes[0]:
        raise ShapeError(f"input shape {ae.input_shape} does not match {sizes[0]} inputs")
    n = len(sizes) - 1
    if len(ae.weights) != n or len(ae.biases) != n or len(ae.activations) != n:
        raise ShapeError("need one weight, bias and activation per layer transition")
    for l in range(n):
        if ae.weights[l].shape != (sizes[l + 1], sizes[l]):
            raise ShapeError(f"weight {l} has shape {ae.weights[l].shape}")
        if ae.biases[l].shape != (sizes[l + 1],):
            raise ShapeError(f"bias {l} has shape {ae.biases[l].shape}")
        if ae.activations[l] not in ACTIVATIONS:
            raise InvalidInputError(f"unknown activation {ae.activations[l]!r}")
    if not all(np.all(np.isfinite(p)) for p in ae.params()):
        raise InvalidInputError("autoencoder parameters must be finite")


def default_layer_sizes(d: int) -> list[int]:
    return [d, max(d // 4, 1), max(d // 16, 1), max(d // 4, 1), d]


def init_autoencoder(
    input_shape: tuple[int, int],
    layer_sizes: list[int] | None = None,
    seed: int = 0,
    weight_init_scale: float = 1.0,
    hidden_activation: str = "relu",
    output_activation: str = "sigmoid",
    id: int = 0,
) -> Autoencoder:
    """Build an autoencoder with weights uniform in +-scale/sqrt(fan_in), zero biases."""
    d = int(input_shape[0]) * int(input_shape[1])
    sizes = list(layer_sizes) if layer_sizes is not None else default_layer_sizes(d)
    if sizes[0] != d:
        raise ShapeError(f"first layer size {sizes[0]} != {d} pixels")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        s = weight_init_scale / np.sqrt(fan_in)
        weights.append(rng.uniform(-s, s, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    acts = [hidden_activation] * (len(sizes) - 2) + [output_activation]
    return Autoencoder(tuple(input_shape), sizes, weights, biases, acts, Normalizer(), id)


def _flatten(ae: Autoencoder, img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.shape != ae.input_shape:
        raise ShapeError(f"image shape {img.shape} != autoencoder input {ae.input_shape}")
    return img.reshape(-1)


def _forward(ae: Autoencoder, x: np.ndarray):
    """Batch forward pass; x has shape (batch, d). Returns (zs, activations)."""
    # the encoder sees centred intensities; targets stay in [0, 1]
    a = x - INPUT_OFFSET
    zs, acts = [], [a]
    for w, b, name in zip(ae.weights, ae.biases, ae.activations):
        z = a @ w.T + b
        a = _act(name, z)
        zs.append(z)
        acts.append(a)
    return zs, acts


def reconstruct_batch(ae: Autoencoder, x: np.ndarray) -> np.ndarray:
    """Reconstruct a stack of flattened images, shape (batch, d)."""
    return _forward(ae, x)[1][-1]


def reconstruct(ae: Autoencoder, img) -> np.ndarray:
    """Return the autoencoder's reconstruction of ``img`` with the same shape."""
    x = _flatten(ae, img)[None, :]
    out = reconstruct_batch(ae, x)[0]
    return np.clip(out, 0.0, 1.0).reshape(ae.input_shape)


def reconstruction_error(img, recon, region=None) -> float:
    """Sum of absolute per-pixel differences over ``region``.

    ``region`` may be None (all pixels), a boolean mask with the image's
    shape, or an iterable of ``(row, col)`` pairs.
    """
    img = np.asarray(img, dtype=np.float64)
    recon = np.asarray(recon, dtype=np.float64)
    check_same_shape(img, recon)
    diff = np.abs(img - recon)
    if region is None:
        return _sequential_sum(diff.ravel())
    region_arr = np.asarray(region)
    if region_arr.dtype == bool:
        check_same_shape(img, region_arr)
        return _sequential_sum(diff[region_arr])
    if region_arr.size == 0:
        return 0.0
    rows, cols = region_arr.reshape(-1, 2).T
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= img.shape[0] or cols.max() >= img.shape[1]:
        raise ShapeError("region contains pixels outside the image")
    return _sequential_sum(diff[rows, cols])


def _sequential_sum(v: np.ndarray) -> float:
    # left-to-right accumulation, so the result does not depend on numpy's pairwise blocking
    return float(np.cumsum(v)[-1]) if v.size else 0.0


def _backward(ae: Autoencoder, x: np.ndarray):
    """Loss and gradients for mean((y - x)^2) averaged over batch and pixels."""
    zs, acts = _forward(ae, x)
    y = acts[-1]
    n = x.shape[0] * x.shape[1]
    loss = float(np.sum((y - x) ** 2) / n)
    delta = 2.0 * (y - x) / n
    grads_w = [None] * len(ae.weights)
    grads_b = [None] * len(ae.weights)
    for l in range(len(ae.weights) - 1, -1, -1):
        delta = delta * _act_grad(ae.activations[l], zs[l], acts[l + 1])
        grads_w[l] = delta.T @ acts[l]
        grads_b[l] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ ae.weights[l]
    return loss, grads_w, grads_b


def training_loss(ae: Autoencoder, img) -> float:
    x = _flatten(ae, img)[None, :]
    y = reconstruct_batch(ae, x)
    return float(np.mean((y - x) ** 2))


def gradient(ae: Autoencoder, img) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Gradient of the per-pixel MSE training loss w.r.t. (weights, biases)."""
    x = _flatten(ae, img)[None, :]
    _, gw, gb = _backward(ae, x)
    return gw, gb


def mean_reconstruction_error(ae: Autoencoder, images) -> float:
    x = np.stack([_flatten(ae, im) for im in images])
    y = np.clip(reconstruct_batch(ae, x), 0.0, 1.0)
    return float(np.abs(y - x).sum(axis=1).mean())


def train(ae: Autoencoder, images, cfg: TrainConfig) -> Autoencoder:
    """Fit ``ae`` to ``images`` with mini-batch SGD; returns a new autoencoder.

    Shuffling is driven by ``cfg.seed`` only, so identical inputs give
    bit-identical weights.
    """
    images = list(images)
    if not images:
        raise InvalidInputError("cannot train on an empty image list")
    x = np.stack([_flatten(ae, im) for im in images])
    out = ae.copy()
    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    lr = cfg.learning_rate
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = x[order[start : start + cfg.batch_size]]
            _, gw, gb = _backward(out, batch)
            for l in range(len(out.weights)):
                out.weights[l] -= lr * gw[l]
                out.biases[l] -= lr * gb[l]
    if not all(np.all(np.isfinite(p)) for p in out.params()):
        raise ArithmeticError("training diverged to non-finite parameters")
    return out
