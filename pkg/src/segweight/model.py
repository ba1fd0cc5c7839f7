"""A three-layer fully convolutional network in plain numpy, float64 throughout.

Layout: per-channel input standardisation -> 3x3 conv -> ReLU -> 3x3 conv
-> ReLU -> 1x1 conv, zero ("same") padding so the logit map has the input's
spatial size. Tensors are channels-last, ``(batch, height, width, channels)``.
The standardisation constants are fixed before training and never updated.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError, TrainingError, ValidationError

MAGIC = b"MSGN1"
PARAM_NAMES = ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "head_w", "head_b")
NORM_NAMES = ("input_mean", "input_std")


class MicroSegNet:
    def __init__(self, in_channels: int, num_classes: int, features: int = 16):
        self.in_channels = int(in_channels)
        self.num_classes = int(num_classes)
        self.features = int(features)
        f, c, k = self.features, self.num_classes, self.in_channels
        self.input_mean = np.zeros(k)
        self.input_std = np.ones(k)
        self.params = {
            "conv1_w": np.zeros((3, 3, k, f)),
            "conv1_b": np.zeros(f),
            "conv2_w": np.zeros((3, 3, f, f)),
            "conv2_b": np.zeros(f),
            "head_w": np.zeros((f, c)),
            "head_b": np.zeros(c),
        }

    @classmethod
    def initialized(cls, in_channels, num_classes, features=16, rng=None) -> "MicroSegNet":
        """He-normal weights, zero biases. ``rng`` is a numpy Generator."""
        model = cls(in_channels, num_classes, features)
        for name in ("conv1_w", "conv2_w", "head_w"):
            w = model.params[name]
            fan_in = int(np.prod(w.shape[:-1]))
            model.params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), w.shape)
        return model

    def copy(self) -> "MicroSegNet":
        other = MicroSegNet(self.in_channels, self.num_classes, self.features)
        other.params = {k: v.copy() for k, v in self.params.items()}
        other.input_mean = self.input_mean.copy()
        other.input_std = self.input_std.copy()
        return other

    def set_input_stats(self, images) -> None:
        """Standardise inputs with the per-channel mean/std of ``images`` (N, H, W, K)."""
        x = np.asarray(images, dtype=np.float64).reshape(-1, self.in_channels)
        self.input_mean = x.mean(axis=0)
        std = x.std(axis=0)
        self.input_std = np.where(std > 0, std, 1.0)

    def __eq__(self, other):
        if not isinstance(other, MicroSegNet):
            return NotImplemented
        return (
            (self.in_channels, self.num_classes, self.features)
            == (other.in_channels, other.num_classes, other.features)
            and all(np.array_equal(self.params[k], other.params[k]) for k in PARAM_NAMES)
            and np.array_equal(self.input_mean, other.input_mean)
            and np.array_equal(self.input_std, other.input_std)
        )

    def num_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


@dataclass
class ForwardCache:
    cols1: np.ndarray
    pre1: np.ndarray
    cols2: np.ndarray
    pre2: np.ndarray
    act2: np.ndarray


def _im2col3(x: np.ndarray) -> np.ndarray:
    """(N, H, W, K) -> (N, H, W, 9K) zero-padded neighbourhoods ordered (dy, dx, k)."""
    n, h, w, k = x.shape
    padded = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    windows = sliding_window_view(padded, (3, 3), axis=(1, 2))
    return np.ascontiguousarray(windows.transpose(0, 1, 2, 4, 5, 3)).reshape(n, h, w, 9 * k)


def _as_batch(model: MicroSegNet, images) -> np.ndarray:
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[-1] != model.in_channels:
        raise ValidationError(
            f"model expects (N, H, W, {model.in_channels}) input, got shape {x.shape}"
        )
    return x


def forward(model: MicroSegNet, images) -> tuple[np.ndarray, ForwardCache]:
    """Logits of shape ``(N, H, W, C)`` plus the activations needed by :func:`backward`.

    ``images`` is an ``(H, W, K)`` array, an ``(N, H, W, K)`` batch, or a FloatImage's data.
    """
    p = model.params
    x = (_as_batch(model, images) - model.input_mean) / model.input_std
    f = model.features
    cols1 = _im2col3(x)
    pre1 = cols1 @ p["conv1_w"].reshape(-1, f) + p["conv1_b"]
    cols2 = _im2col3(np.maximum(pre1, 0.0))
    pre2 = cols2 @ p["conv2_w"].reshape(-1, f) + p["conv2_b"]
    act2 = np.maximum(pre2, 0.0)
    logits = act2 @ p["head_w"] + p["head_b"]
    return logits, ForwardCache(cols1, pre1, cols2, pre2, act2)


def predict(model: MicroSegNet, images) -> np.ndarray:
    logits, _ = forward(model, images)
    return logits.argmax(axis=-1)


def backward(model: MicroSegNet, cache: ForwardCache, grad_logits: np.ndarray) -> dict:
    """Reverse-mode gradients of a scalar loss given d(loss)/d(logits)."""
    p = model.params
    f, c = model.features, model.num_classes
    g = np.asarray(grad_logits, dtype=np.float64)
    if g.shape != cache.act2.shape[:3] + (c,):
        raise ValidationError(f"gradient shape {g.shape} does not match the cached forward pass")
    g2 = g.reshape(-1, c)
    a2 = cache.act2.reshape(-1, f)
    grads = {"head_w": a2.T @ g2, "head_b": g2.sum(axis=0)}
    d_pre2 = (g2 @ p["head_w"].T) * (cache.pre2.reshape(-1, f) > 0)
    cols2 = cache.cols2.reshape(-1, 9 * f)
    grads["conv2_w"] = (cols2.T @ d_pre2).reshape(p["conv2_w"].shape)
    grads["conv2_b"] = d_pre2.sum(axis=0)
    # input gradient of a same-padded 3x3 conv: correlate with the flipped, transposed kernel
    flipped = p["conv2_w"][::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, f)
    d_act1 = _im2col3(d_pre2.reshape(cache.pre2.shape)) @ flipped
    d_pre1 = (d_act1 * (cache.pre1 > 0)).reshape(-1, f)
    cols1 = cache.cols1.reshape(-1, cache.cols1.shape[-1])
    grads["conv1_w"] = (cols1.T @ d_pre1).reshape(p["conv1_w"].shape)
    grads["conv1_b"] = d_pre1.sum(axis=0)
    return grads


class OptimizerState:
    """SGD with momentum and L2 weight decay folded into the velocity."""

    def __init__(self, model: MicroSegNet, learning_rate=0.001, momentum=0.9, weight_decay=0.0005):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.velocity = {k: np.zeros_like(v) for k, v in model.params.items()}


def sgd_step(model: MicroSegNet, grads: dict, opt: OptimizerState) -> MicroSegNet:
    """``v <- mu v + g + wd theta``; ``theta <- theta - lr v``. Updates ``model`` in place."""
    for name in PARAM_NAMES:
        g = grads[name]
        if g.shape != model.params[name].shape:
            raise ValidationError(f"gradient for {name} has shape {g.shape}")
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.isfinite(g).sum())
            raise TrainingError(f"non-finite gradient in parameter block {name} ({bad} entries)")
    for name in PARAM_NAMES:
        theta = model.params[name]
        v = opt.velocity[name]
        v *= opt.momentum
        v += grads[name]
        v += opt.weight_decay * theta
        theta -= opt.learning_rate * v
    return model


def save_model(model: MicroSegNet, path) -> None:
    """Binary layout: ``MSGN1``, three little-endian uint32 (in, features, classes),
    then the input mean and std and each parameter block in :data:`PARAM_NAMES`
    order, all as little-endian float64."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<3I", model.in_channels, model.features, model.num_classes))
        fh.write(np.ascontiguousarray(model.input_mean, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.input_std, dtype="<f8").tobytes())
        for name in PARAM_NAMES:
            fh.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_model(path) -> MicroSegNet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:5] != MAGIC:
        raise FormatError(f"{path}: not a MicroSegNet file (bad magic)")
    if len(raw) < 17:
        raise FormatError(f"{path}: truncated header")
    in_ch, feat, ncls = struct.unpack("<3I", raw[5:17])
    model = MicroSegNet(in_ch, ncls, feat)
    offset = 17
    blocks = {"input_mean": model.input_mean, "input_std": model.input_std, **model.params}
    for name in NORM_NAMES + PARAM_NAMES:
        shape = blocks[name].shape
        nbytes = 8 * int(np.prod(shape))
        chunk = raw[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"{path}: truncated parameter block {name}")
        value = np.frombuffer(chunk, dtype="<f8").reshape(shape).astype(np.float64)
        if name in NORM_NAMES:
            setattr(model, name, value)
        else:
            model.params[name] = value
        offset += nbytes
    if offset != len(raw):
        raise FormatError(f"{path}: {len(raw) - offset} trailing bytes")
    return model
