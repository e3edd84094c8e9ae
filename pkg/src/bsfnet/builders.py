"""Reference architectures: the tabular MLP and the small image CNN."""

from __future__ import annotations

from typing import Sequence

from .bsf import BsfChannel, BsfElement
from .errors import ConfigurationError
from .layers import Conv2D, Dense, Dropout, Flatten, MaxPool2D
from .network import Network


def mlp_widths(d: int, n: int, hidden: Sequence[int] | None = None) -> list[int]:
    """Layer widths from input to output; hidden defaults to (d, 2d, d)."""
    hidden = list(hidden) if hidden is not None else [d, 2 * d, d]
    return [d] + hidden + [n]


def build_mlp(d: int, n: int, with_bsf_input: bool = False, with_bsf_hidden: bool = False,
              hidden: Sequence[int] | None = None, activation: str = "relu",
              seed: int = 0) -> Network:
    if d < 1 or n < 2:
        raise ConfigurationError("build_mlp needs d >= 1 and n >= 2")
    widths = mlp_widths(d, n, hidden)
    layers = [BsfElement(d)] if with_bsf_input else []
    for i, (w_in, w_out) in enumerate(zip(widths[:-1], widths[1:])):
        last = i == len(widths) - 2
        layers.append(Dense(w_in, w_out, "linear" if last else activation))
        if with_bsf_hidden and not last:
            layers.append(BsfElement(w_out))
    net = Network(layers, (d,))
    net.reset_parameters(seed)
    return net


def build_cnn(input_shape: Sequence[int], n: int, with_bsf_input: bool = False,
              with_bsf_channels: bool = False, kernels: Sequence[int] = (32, 64),
              dense: int = 128, dropout: float = 0.5, seed: int = 0) -> Network:
    """conv3x3(32) -> conv3x3(64) -> maxpool 2x2 -> flatten -> dense(128) -> dropout -> dense(n)."""
    c, h, w = (int(v) for v in input_shape)
    if h < 8 or w < 8:
        raise ConfigurationError(f"build_cnn needs images of at least 8x8, got {h}x{w}")
    layers = []
    if with_bsf_input:
        layers.append(BsfElement(c * h * w, layout=(h, w) if c == 1 else None))
    in_ch = c
    for k in kernels:
        layers.append(Conv2D(in_ch, k, "relu"))
        if with_bsf_channels:
            layers.append(BsfChannel(k))
        in_ch = k
    side_h, side_w = (h - 2 * len(kernels)) // 2, (w - 2 * len(kernels)) // 2
    layers += [
        MaxPool2D(),
        Flatten(),
        Dense(in_ch * side_h * side_w, dense, "relu"),
        Dropout(dropout),
        Dense(dense, n, "linear"),
    ]
    net = Network(layers, (c, h, w))
    net.reset_parameters(seed)
    return net
