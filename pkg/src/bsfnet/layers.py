"""Layers with hand-written forward and backward passes.

Every layer keeps the intermediates of its last train-mode forward in
``cache``; ``backward`` consumes them and fills ``grads`` for each entry in
``params``. Image tensors are laid out as ``[batch, channels, height, width]``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, InputError, StateError
from .tensor import RngStream

LAYER_TYPES: dict[str, type["Layer"]] = {}


def register(cls):
    LAYER_TYPES[cls.kind] = cls
    return cls


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.opt_state: dict | None = None
        self.cache = None
        # the first layer of a network never needs to hand a gradient back
        self.need_input_grad = True

    def forward(self, x: np.ndarray, train: bool = False, rng: RngStream | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, input_shape: tuple) -> tuple:
        return input_shape

    def config(self) -> dict:
        return {}

    def reset_parameters(self, rng: RngStream) -> None:
        pass

    def n_weights(self) -> int:
        return sum(p.size for p in self.params.values())

    def _take_cache(self):
        if self.cache is None:
            raise StateError(f"{self.kind}: backward called without a preceding train-mode forward")
        cache, self.cache = self.cache, None
        return cache

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.config().items())
        return f"{type(self).__name__}({args})"


def _activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _activation_grad(name: str, z: np.ndarray, a: np.ndarray, da: np.ndarray) -> np.ndarray:
    if name == "relu":
        return da * (z > 0)
    if name == "tanh":
        return da * (1.0 - a * a)
    return da


ACTIVATIONS = ("linear", "relu", "tanh")


def glorot_uniform(rng: RngStream, shape: tuple, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return (2.0 * rng.uniform_array(shape) - 1.0) * limit


@register
class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, activation: str = "linear"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.n_in, self.n_out, self.activation = int(n_in), int(n_out), activation
        self.params = {"W": np.zeros((self.n_in, self.n_out)), "b": np.zeros(self.n_out)}

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out, "activation": self.activation}

    def reset_parameters(self, rng):
        self.params["W"] = glorot_uniform(rng, (self.n_in, self.n_out), self.n_in, self.n_out)
        self.params["b"] = np.zeros(self.n_out)

    def output_shape(self, input_shape):
        if tuple(input_shape) != (self.n_in,):
            raise ConfigurationError(f"dense expects input ({self.n_in},), got {tuple(input_shape)}")
        return (self.n_out,)

    def forward(self, x, train=False, rng=None):
        z = x @ self.params["W"] + self.params["b"]
        a = _activate(self.activation, z)
        self.cache = (x, z, a) if train else None
        return a

    def backward(self, dy):
        x, z, a = self._take_cache()
        dz = _activation_grad(self.activation, z, a, dy)
        self.grads = {"W": x.T @ dz, "b": dz.sum(axis=0)}
        return dz @ self.params["W"].T if self.need_input_grad else None


@register
class Activation(Layer):
    kind = "activation"

    def __init__(self, fn: str = "relu"):
        super().__init__()
        if fn not in ("relu", "tanh"):
            raise ConfigurationError(f"unknown activation {fn!r}")
        self.fn = fn

    def config(self):
        return {"fn": self.fn}

    def forward(self, x, train=False, rng=None):
        a = _activate(self.fn, x)
        self.cache = (x, a) if train else None
        return a

    def backward(self, dy):
        x, a = self._take_cache()
        return _activation_grad(self.fn, x, a, dy)


@register
class Conv2D(Layer):
    """3x3 convolution, valid padding, stride 1."""

    kind = "conv2d"
    size = 3

    def __init__(self, in_channels: int, n_kernels: int, activation: str = "relu"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.in_channels, self.n_kernels, self.activation = int(in_channels), int(n_kernels), activation
        k = self.size
        self.params = {"W": np.zeros((self.n_kernels, self.in_channels, k, k)), "b": np.zeros(self.n_kernels)}

    def config(self):
        return {"in_channels": self.in_channels, "n_kernels": self.n_kernels, "activation": self.activation}

    def reset_parameters(self, rng):
        k2 = self.size * self.size
        self.params["W"] = glorot_uniform(rng, self.params["W"].shape,
                                          self.in_channels * k2, self.n_kernels * k2)
        self.params["b"] = np.zeros(self.n_kernels)

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] != self.in_channels:
            raise ConfigurationError(
                f"conv2d expects ({self.in_channels}, h, w) input, got {tuple(input_shape)}")
        c, h, w = input_shape
        if h < self.size or w < self.size:
            raise ConfigurationError(f"conv2d: spatial size {h}x{w} smaller than kernel")
        return (self.n_kernels, h - self.size + 1, w - self.size + 1)

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or x.shape[2] < self.size or x.shape[3] < self.size:
            raise InputError(f"conv2d: input of shape {x.shape} too small or not rank 4")
        B, C, H, W = x.shape
        k = self.size
        Ho, Wo = H - k + 1, W - k + 1
        # [B, Ho, Wo, C, k, k] patches, flattened in the same (C, kh, kw) order as the kernels
        cols = sliding_window_view(x.transpose(0, 2, 3, 1), (k, k), axis=(1, 2)).reshape(B * Ho * Wo, C * k * k)
        z = cols @ self.params["W"].reshape(self.n_kernels, -1).T + self.params["b"]
        z = z.reshape(B, Ho, Wo, self.n_kernels).transpose(0, 3, 1, 2)
        a = _activate(self.activation, z)
        self.cache = (x.shape, cols, z, a) if train else None
        return a

    def backward(self, dy):
        x_shape, cols, z, a = self._take_cache()
        B, C, H, W = x_shape
        k = self.size
        Ho, Wo = H - k + 1, W - k + 1
        dz = _activation_grad(self.activation, z, a, dy)
        dz2 = dz.transpose(0, 2, 3, 1).reshape(B * Ho * Wo, self.n_kernels)
        self.grads = {"W": (dz2.T @ cols).reshape(self.params["W"].shape), "b": dz2.sum(axis=0)}
        if not self.need_input_grad:
            return None
        # (kh, kw, C) order keeps each scattered slice contiguous in C
        Wm = self.params["W"].transpose(0, 2, 3, 1).reshape(self.n_kernels, -1)
        dcols = (dz2 @ Wm).reshape(B, Ho, Wo, k, k, C)
        dx = np.zeros((B, H, W, C))
        for i in range(k):
            for j in range(k):
                dx[:, i:i + Ho, j:j + Wo, :] += dcols[:, :, :, i, j, :]
        return dx.transpose(0, 3, 1, 2)


@register
class MaxPool2D(Layer):
    """2x2 non-overlapping max pooling; odd trailing rows/columns are dropped."""

    kind = "maxpool2d"
    size = 2

    def output_shape(self, input_shape):
        if len(input_shape) != 3:
            raise ConfigurationError(f"maxpool2d expects (c, h, w) input, got {tuple(input_shape)}")
        c, h, w = input_shape
        if h < 2 or w < 2:
            raise ConfigurationError(f"maxpool2d: spatial size {h}x{w} smaller than the pool")
        return (c, h // 2, w // 2)

    def forward(self, x, train=False, rng=None):
        if x.ndim != 4 or x.shape[2] < 2 or x.shape[3] < 2:
            raise InputError(f"maxpool2d: input of shape {x.shape} too small or not rank 4")
        B, C, H, W = x.shape
        H2, W2 = H // 2, W // 2
        win = (x[:, :, :2 * H2, :2 * W2].reshape(B, C, H2, 2, W2, 2)
               .transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H2, W2, 4))
        idx = win.argmax(axis=-1)[..., None]
        y = np.take_along_axis(win, idx, axis=-1)[..., 0]
        self.cache = (x.shape, idx) if train else None
        return y

    def backward(self, dy):
        x_shape, idx = self._take_cache()
        B, C, H, W = x_shape
        H2, W2 = H // 2, W // 2
        dwin = np.zeros((B, C, H2, W2, 4))
        np.put_along_axis(dwin, idx, dy[..., None], axis=-1)
        dx = np.zeros(x_shape)
        dx[:, :, :2 * H2, :2 * W2] = (dwin.reshape(B, C, H2, W2, 2, 2)
                                      .transpose(0, 1, 2, 4, 3, 5).reshape(B, C, 2 * H2, 2 * W2))
        return dx


@register
class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, input_shape):
        return (int(np.prod(input_shape)),)

    def forward(self, x, train=False, rng=None):
        self.cache = x.shape if train else None
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._take_cache())


@register
class Dropout(Layer):
    """Inverted dropout: survivors are scaled by 1/(1-p) at train time."""

    kind = "dropout"

    def __init__(self, p: float = 0.5):
        super().__init__()
        if not 0 <= p < 1:
            raise ConfigurationError("dropout rate must lie in [0, 1)")
        self.p = float(p)

    def config(self):
        return {"p": self.p}

    def forward(self, x, train=False, rng=None):
        if not train:
            self.cache = None
            return x
        if rng is None:
            raise StateError("dropout needs an RngStream in train mode")
        keep = (rng.uniform_array(x.shape) >= self.p) / (1.0 - self.p)
        self.cache = keep
        return x * keep

    def backward(self, dy):
        return dy * self._take_cache()
