"""Adam optimizer and the L1 penalty applied to filter weights."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class AdamConfig:
    alpha: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def scaled(self, factor: float) -> "AdamConfig":
        return replace(self, alpha=self.alpha * factor)


def new_state(params: dict[str, np.ndarray]) -> dict:
    return {
        "t": 0,
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
    }


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray],
              state: dict, cfg: AdamConfig) -> None:
    """In-place Adam update of ``params``; ``state`` holds t, m and v."""
    state["t"] += 1
    t = state["t"]
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {k!r} has shape {g.shape}, parameter {p.shape}")
        m = state["m"].setdefault(k, np.zeros_like(p))
        v = state["v"].setdefault(k, np.zeros_like(p))
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        p -= cfg.alpha * (m / bc1) / (np.sqrt(v / bc2) + cfg.epsilon)


def l1_term(w: np.ndarray, coef: float) -> tuple[float, np.ndarray]:
    """Penalty ``coef * sum|w|`` and its subgradient (sign(0) = 0)."""
    if coef < 0:
        raise ValueError("l1 coefficient must be non-negative")
    return float(coef * np.abs(w).sum()), coef * np.sign(w)
