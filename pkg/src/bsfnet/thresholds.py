"""Rules deciding which filter units survive."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bsf import above_percentile, below_percentile, importances


@dataclass(frozen=True)
class PruneThreshold:
    """``absolute``: keep w >= value. ``percentile``: keep the units ranked
    above the value-th percentile. ``top_k``: keep the int(value) best-ranked
    units. Ranking is by weight, ties broken by index."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind == "absolute":
            ok = 0.0 <= self.value <= 1.0
        elif self.kind == "percentile":
            ok = 0.0 < self.value < 100.0
        elif self.kind == "top_k":
            ok = self.value >= 1 and float(self.value).is_integer()
        else:
            raise ValueError(f"unknown threshold kind {self.kind!r}")
        if not ok:
            raise ValueError(f"invalid {self.kind} threshold {self.value!r}")

    @classmethod
    def parse(cls, text: str) -> "PruneThreshold":
        """``abs:<w>``, ``pct:<p>`` or ``topk:<k>``."""
        prefix, _, rest = text.partition(":")
        kinds = {"abs": "absolute", "pct": "percentile", "topk": "top_k"}
        if prefix not in kinds or not rest:
            raise ValueError(f"threshold must look like abs:0.5, pct:80 or topk:6, got {text!r}")
        return cls(kinds[prefix], float(rest))

    def __str__(self):
        short = {"absolute": "abs", "percentile": "pct", "top_k": "topk"}[self.kind]
        value = int(self.value) if self.kind == "top_k" else self.value
        return f"{short}:{value}"

    def keep_mask(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=np.float64)
        if self.kind == "absolute":
            return w >= self.value
        if self.kind == "percentile":
            chosen = above_percentile(w, self.value)
        else:
            chosen = importances(w)[: int(self.value)]
        return _mask(len(w), chosen)

    def low_mask(self, w) -> np.ndarray:
        """The opposite end: below w_min, ranked below the percentile, or the k worst."""
        w = np.asarray(w, dtype=np.float64)
        if self.kind == "absolute":
            return w < self.value
        if self.kind == "percentile":
            chosen = below_percentile(w, self.value)
        else:
            chosen = importances(w)[::-1][: int(self.value)]
        return _mask(len(w), chosen)


def _mask(n: int, chosen) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[[i for i, _ in chosen]] = True
    return mask
