"""Binary stochastic filter layers.

A filter unit with pass probability ``w`` outputs its input when a fresh
uniform draw ``z`` satisfies ``z < w`` and zero otherwise, i.e. it multiplies
the input by ``b ~ Bernoulli(w)``. Backward uses the straight-through rule:
the gradient reaches the input unchanged, and the gradient with respect to
``w`` treats ``db/dw`` as 1, which gives ``sum(grad_y * x)``.

Element mode gates every scalar of a sample (input features, hidden units,
image pixels). Channel mode gates whole feature maps of a convolution.
"""

from __future__ import annotations

import math

import csv
import io
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, StateError
from .layers import Layer, register
from .optim import l1_term
from .tensor import RngStream

ELEMENT = "element"
CHANNEL = "channel"


class BsfLayer(Layer):
    mode = ELEMENT

    def __init__(self, n_units: int, l1_coef: float = 0.0, layout: Sequence[int] | None = None):
        super().__init__()
        if n_units < 1:
            raise ConfigurationError("a filter layer needs at least one unit")
        if l1_coef < 0:
            raise ConfigurationError("l1 coefficient must be non-negative")
        if layout is not None and int(np.prod(layout)) != n_units:
            raise ConfigurationError(f"layout {tuple(layout)} does not cover {n_units} units")
        self.n_units = int(n_units)
        self.l1_coef = float(l1_coef)
        self.layout = tuple(int(v) for v in layout) if layout is not None else None
        self.params = {"w": np.ones(self.n_units)}
        self.snapshots: list[tuple[int, np.ndarray]] = []

    @property
    def w(self) -> np.ndarray:
        return self.params["w"]

    @w.setter
    def w(self, value):
        value = np.array(value, dtype=np.float64).reshape(self.n_units)
        self.params["w"] = value

    def config(self):
        cfg = {"n_units": self.n_units, "l1_coef": self.l1_coef}
        if self.layout is not None:
            cfg["layout"] = list(self.layout)
        return cfg

    def reset_parameters(self, rng):
        self.params["w"] = np.ones(self.n_units)

    def n_weights(self) -> int:
        # filter gates are bookkeeping, not part of the deployed model
        return 0

    def forward(self, x, train=False, rng=None):
        y, mask = bsf_forward(self, x, train, rng)
        self.cache = (x, mask) if train else None
        return y

    def backward(self, dy):
        x, mask = self._take_cache()
        dx, dw = bsf_backward(self, dy, x, mask)
        self.grads = {"w": dw}
        return dx

    def penalty(self) -> float:
        return l1_term(self.w, self.l1_coef)[0]

    def record(self, epoch: int) -> None:
        self.snapshots.append((int(epoch), self.w.copy()))


@register
class BsfElement(BsfLayer):
    kind = "bsf_element"
    mode = ELEMENT

    def output_shape(self, input_shape):
        if int(np.prod(input_shape)) != self.n_units:
            raise ConfigurationError(
                f"bsf_element with {self.n_units} units cannot gate input {tuple(input_shape)}")
        return tuple(input_shape)


@register
class BsfChannel(BsfLayer):
    kind = "bsf_channel"
    mode = CHANNEL

    def output_shape(self, input_shape):
        if len(input_shape) != 3 or input_shape[0] != self.n_units:
            raise ConfigurationError(
                f"bsf_channel with {self.n_units} units cannot gate input {tuple(input_shape)}")
        return tuple(input_shape)


def _gate_shape(state: BsfLayer, x: np.ndarray) -> tuple:
    """Shape of the mask for ``x``; channel masks broadcast over space."""
    if state.mode == CHANNEL:
        if x.ndim != 4 or x.shape[1] != state.n_units:
            raise ConfigurationError(
                f"channel filter of {state.n_units} units got input of shape {x.shape}")
        return (x.shape[0], state.n_units, 1, 1)
    if int(np.prod(x.shape[1:])) != state.n_units:
        raise ConfigurationError(f"element filter of {state.n_units} units got input of shape {x.shape}")
    return (x.shape[0],) + tuple(x.shape[1:])


def bsf_forward(state: BsfLayer, x: np.ndarray, train: bool,
                rng: RngStream | None) -> tuple[np.ndarray, np.ndarray]:
    """Gate ``x``; returns the output and the {0, 1} mask that was applied.

    Train mode samples a fresh mask per sample and unit. Eval mode passes
    the expectation ``x * w`` and reports an all-ones mask.
    """
    shape = _gate_shape(state, x)
    w = state.w.reshape((1,) + shape[1:])
    if not train:
        return x * w, np.ones(shape)
    if rng is None:
        raise StateError("filter layer needs an RngStream in train mode")
    z = rng.uniform_array(shape)
    mask = (z < w).astype(np.float64)
    return x * mask, mask


def bsf_backward(state: BsfLayer, grad_y: np.ndarray, x: np.ndarray,
                 mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Straight-through gradients for the input and for ``w``.

    The L1 subgradient is included here, so call this once per optimizer step.
    """
    if grad_y.shape != x.shape or mask.shape[0] != x.shape[0]:
        raise StateError(f"gradient shape {grad_y.shape} does not match cached input {x.shape}")
    gx = grad_y * x
    if state.mode == CHANNEL:
        dw = gx.sum(axis=(0, 2, 3))
    else:
        dw = gx.reshape(x.shape[0], -1).sum(axis=0)
    dw = dw + l1_term(state.w, state.l1_coef)[1]
    return grad_y, dw


def clamp_weights(state: BsfLayer) -> BsfLayer:
    np.clip(state.params["w"], 0.0, 1.0, out=state.params["w"])
    return state


def importances(w: np.ndarray | BsfLayer) -> list[tuple[int, float]]:
    """``(index, weight)`` pairs, heaviest first, ties by ascending index."""
    if isinstance(w, BsfLayer):
        w = w.w
    return sorted(((i, float(v)) for i, v in enumerate(np.asarray(w))), key=lambda t: (-t[1], t[0]))


def above_percentile(w: np.ndarray, p: float) -> list[tuple[int, float]]:
    """Ranked entries above the ``p``-th percentile.

    For distinct weights this is exactly the set strictly above the linearly
    interpolated percentile; with ties (gates clamped at 1.0, say) the
    ranking's index order breaks them instead of keeping nothing.
    """
    ranked = importances(w)
    return ranked[:len(ranked) - 1 - math.floor(_rank_position(len(ranked), p))]


def below_percentile(w: np.ndarray, p: float) -> list[tuple[int, float]]:
    """Ranked entries below the ``p``-th percentile, worst first."""
    ranked = importances(w)[::-1]
    return ranked[:math.ceil(_rank_position(len(ranked), p))]


def _rank_position(n: int, p: float) -> float:
    # sorted position of the percentile; rounding absorbs float noise like 31.999999
    return round((n - 1) * p / 100, 9)


# -- snapshot CSV -------------------------------------------------------------
#
# Vector layout:  header "epoch,w_0,...,w_{n-1}", one row per recorded epoch.
# Grid layout:    a leading "# layout=grid height=H width=W" line, then header
#                 "epoch,r0c0,r0c1,..." (row-major), one row per epoch.

def write_snapshot_csv(snapshots: Iterable[tuple[int, np.ndarray]], layout: Sequence[int] | None = None) -> str:
    snapshots = list(snapshots)
    buf = io.StringIO()
    n = len(snapshots[0][1]) if snapshots else (int(np.prod(layout)) if layout else 0)
    if layout is not None and len(layout) == 2:
        h, w = layout
        buf.write(f"# layout=grid height={h} width={w}\n")
        names = [f"r{r}c{c}" for r in range(h) for c in range(w)]
    else:
        names = [f"w_{i}" for i in range(n)]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch"] + names)
    for epoch, weights in snapshots:
        writer.writerow([int(epoch)] + [repr(float(v)) for v in weights])
    return buf.getvalue()


def read_snapshot_csv(text: str) -> tuple[list[tuple[int, np.ndarray]], tuple[int, int] | None]:
    lines = text.splitlines()
    layout = None
    if lines and lines[0].startswith("#"):
        fields = dict(part.split("=") for part in lines[0][1:].split() if "=" in part)
        layout = (int(fields["height"]), int(fields["width"]))
        lines = lines[1:]
    rows = list(csv.reader(lines))[1:]
    return [(int(r[0]), np.array([float(v) for v in r[1:]])) for r in rows], layout
