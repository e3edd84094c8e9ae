"""Grayscale frames of filter weights, written as binary PGM (P5)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .bsf import BsfLayer, write_snapshot_csv
from .errors import InputError

BAR_WIDTH = 512
BAR_HEIGHT = 256


def _pgm(pixels: np.ndarray) -> bytes:
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.astype(np.uint8).tobytes()


def render_frame(weights, layout: Sequence[int] | None = None) -> bytes:
    """PGM bytes for one weight vector.

    With a ``(height, width)`` layout every weight becomes one pixel of value
    ``round(255 * w)``. Without one the weights are drawn as a bar chart: white
    bars rising from the bottom of a black ``BAR_HEIGHT`` x ``BAR_WIDTH``
    canvas (wider when there are more units than columns).
    """
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.size == 0:
        raise InputError("cannot render an empty weight vector")
    if not np.isfinite(w).all() or w.min() < 0.0 or w.max() > 1.0:
        raise InputError("frame weights must lie in [0, 1]")
    if layout is not None:
        h, wd = (int(v) for v in layout)
        if h * wd != w.size:
            raise InputError(f"layout {h}x{wd} does not fit {w.size} weights")
        return _pgm(np.rint(255.0 * w).reshape(h, wd))

    n = w.size
    width = max(BAR_WIDTH, n)
    edges = np.arange(n + 1) * width // n
    heights = np.rint(w * BAR_HEIGHT).astype(int)
    canvas = np.zeros((BAR_HEIGHT, width))
    for i in range(n):
        if heights[i]:
            canvas[BAR_HEIGHT - heights[i]:, edges[i]:edges[i + 1]] = 255
    return _pgm(canvas)


def read_pgm(data: bytes) -> np.ndarray:
    """Inverse of the writer above; only what it produces is supported."""
    parts = data.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P5" or parts[2] != b"255":
        raise InputError("not a binary 8-bit PGM")
    w, h = (int(v) for v in parts[1].split())
    pixels = np.frombuffer(parts[3], dtype=np.uint8)
    if pixels.size != w * h:
        raise InputError("PGM payload size does not match its header")
    return pixels.reshape(h, w)


def export_layer_frames(layer: BsfLayer, directory: Path) -> list[Path]:
    """One ``epoch_NNNN.csv`` and ``epoch_NNNN.pgm`` per recorded snapshot."""
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for epoch, w in layer.snapshots:
        stem = directory / f"epoch_{epoch:04d}"
        stem.with_suffix(".csv").write_text(write_snapshot_csv([(epoch, w)], layer.layout))
        stem.with_suffix(".pgm").write_bytes(render_frame(w, layer.layout))
        written += [stem.with_suffix(".csv"), stem.with_suffix(".pgm")]
    return written


def export_frames(layers: Sequence[tuple[int, BsfLayer]], directory: Path) -> list[Path]:
    """Frames for every filter layer; a ``layer_<i>`` subdirectory each when there are several."""
    directory = Path(directory)
    if len(layers) == 1:
        return export_layer_frames(layers[0][1], directory)
    written = []
    for index, layer in layers:
        written += export_layer_frames(layer, directory / f"layer_{index}")
    return written
