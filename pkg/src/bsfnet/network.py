"""Sequential network with a softmax output and two-term cross-entropy loss.

Model files are JSON::

    {"format": "bsfnet-model", "version": 1,
     "input_shape": [13],
     "layers": [{"kind": "dense",
                 "config": {"n_in": 13, "n_out": 13, "activation": "relu"},
                 "params": {"W": {"shape": [13, 13], "data": "<base64>"}, ...},
                 "snapshots": [{"epoch": 1, "w": {...}}]},   # filter layers only
                ...]}

``data`` is the base64 encoding of the little-endian float64 values in
row-major order, so parameters survive a round trip bit for bit.
"""

from __future__ import annotations

import base64
import copy
import json
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import bsf as _bsf  # noqa: F401  (registers the filter layer kinds)
from .bsf import BsfLayer
from .errors import ConfigurationError, FormatError, InputError
from .layers import LAYER_TYPES, Conv2D, Dense, Layer
from .tensor import RngStream

CLAMP_EPS = 1e-7
MODEL_FORMAT = "bsfnet-model"
MODEL_VERSION = 1


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    return probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))


def loss_and_grad(probs: np.ndarray, labels_onehot: np.ndarray,
                  eps: float = CLAMP_EPS) -> tuple[float, np.ndarray]:
    """Batch mean of ``-sum_i c_i ln p_i + (1 - c_i) ln(1 - p_i)``.

    Probabilities are clamped to ``[eps, 1 - eps]``; the gradient is that of
    the clamped expression, so it vanishes where the clamp is active.
    """
    probs = np.asarray(probs, dtype=np.float64)
    c = np.asarray(labels_onehot, dtype=np.float64)
    if probs.shape != c.shape:
        raise InputError(f"probabilities {probs.shape} and labels {c.shape} differ in shape")
    if not (np.isin(c, (0.0, 1.0)).all() and (c.sum(axis=1) == 1).all()):
        raise InputError("label rows must be one-hot")
    n = probs.shape[0]
    p = np.clip(probs, eps, 1.0 - eps)
    per_sample = -(c * np.log(p) + (1.0 - c) * np.log(1.0 - p)).sum(axis=1)
    inside = (probs > eps) & (probs < 1.0 - eps)
    dprobs = -(c / p - (1.0 - c) / (1.0 - p)) * inside / n
    return float(per_sample.mean()), dprobs


def _encode(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


class Network:
    def __init__(self, layers: Sequence[Layer], input_shape: Sequence[int]):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.shapes = self._check_chain()
        for i, layer in enumerate(self.layers):
            layer.need_input_grad = i > 0

    def _check_chain(self) -> list[tuple]:
        shapes = [self.input_shape]
        for i, layer in enumerate(self.layers):
            try:
                shapes.append(tuple(layer.output_shape(shapes[-1])))
            except ConfigurationError as exc:
                raise ConfigurationError(f"layer {i} ({layer.kind}): {exc}") from None
        if len(shapes[-1]) != 1 or shapes[-1][0] < 2:
            raise ConfigurationError(f"network output {shapes[-1]} is not a class-score vector")
        return shapes

    @property
    def n_classes(self) -> int:
        return self.shapes[-1][0]

    def __repr__(self):
        inner = ",\n  ".join(repr(layer) for layer in self.layers)
        return f"Network(input_shape={self.input_shape}, layers=[\n  {inner}])"

    # -- passes --------------------------------------------------------------

    def forward(self, x: np.ndarray, train: bool = False, rng: RngStream | None = None) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ConfigurationError(
                f"layer 0 ({self.layers[0].kind}): batch shape {x.shape[1:]} != declared input {self.input_shape}")
        for layer in self.layers:
            x = layer.forward(x, train=train, rng=rng)
        return softmax(x)

    def backward(self, probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray | None:
        d = softmax_backward(probs, dprobs)
        for layer in reversed(self.layers):
            d = layer.backward(d)
        return d

    def predict(self, x: np.ndarray, batch_size: int = 256) -> np.ndarray:
        out = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(out) if out else np.zeros((0, self.n_classes))

    # -- parameters ------------------------------------------------------------

    def parameters(self) -> Iterator[tuple[int, str, np.ndarray]]:
        for i, layer in enumerate(self.layers):
            for name, p in layer.params.items():
                yield i, name, p

    def bsf_layers(self) -> list[BsfLayer]:
        return [layer for layer in self.layers if isinstance(layer, BsfLayer)]

    def penalty(self) -> float:
        return sum(layer.penalty() for layer in self.bsf_layers())

    def n_weights(self) -> int:
        """Weights and biases of the model proper; filter gates excluded."""
        return sum(layer.n_weights() for layer in self.layers)

    def n_units(self) -> int:
        """Neurons of the dense layers (hidden and output)."""
        return sum(layer.n_out for layer in self.layers if isinstance(layer, Dense))

    def reset_parameters(self, seed: int) -> None:
        """Glorot-uniform weights and zero biases; filter gates back to 1.

        Each dense/conv layer draws from its own stream keyed by its ordinal
        among dense/conv layers, so adding or removing filter layers does not
        change the initial weights of the others.
        """
        root = RngStream(seed, "init")
        ordinal = 0
        for layer in self.layers:
            if isinstance(layer, (Dense, Conv2D)):
                layer.reset_parameters(root.child(ordinal))
                ordinal += 1
            else:
                layer.reset_parameters(root)
            layer.opt_state = None

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    # -- serialization -----------------------------------------------------------

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            entry = {
                "kind": layer.kind,
                "config": layer.config(),
                "params": {k: _encode(v) for k, v in layer.params.items()},
            }
            if isinstance(layer, BsfLayer):
                entry["snapshots"] = [{"epoch": e, "w": _encode(w)} for e, w in layer.snapshots]
            layers.append(entry)
        return {"format": MODEL_FORMAT, "version": MODEL_VERSION,
                "input_shape": list(self.input_shape), "layers": layers}

    @classmethod
    def from_dict(cls, d: dict) -> "Network":
        if d.get("format") != MODEL_FORMAT:
            raise FormatError("not a bsfnet model document")
        layers = []
        for entry in d["layers"]:
            kind = entry["kind"]
            if kind not in LAYER_TYPES:
                raise FormatError(f"unknown layer kind {kind!r}")
            layer = LAYER_TYPES[kind](**entry.get("config", {}))
            for name, enc in entry.get("params", {}).items():
                layer.params[name] = _decode(enc)
            if isinstance(layer, BsfLayer):
                layer.snapshots = [(int(s["epoch"]), _decode(s["w"])) for s in entry.get("snapshots", [])]
            layers.append(layer)
        return cls(layers, d["input_shape"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Network":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
        return cls.from_dict(d)
