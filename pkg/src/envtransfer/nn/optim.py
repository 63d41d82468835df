from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 16
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    seed: int = 0
    patience: int = 10

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be non-negative")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _check_finite(grads):
    for key, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient for {key}; step refused")


def optimizer_step(state: AdamState | None, params: dict, grads: dict, cfg: TrainConfig):
    """Update ``params`` in place from ``grads`` (both keyed alike).

    Returns ``(params, state)``. Adam uses bias-corrected moments; SGD ignores
    ``state``. A non-finite gradient raises before anything is modified.
    """
    _check_finite(grads)
    lr = cfg.learning_rate
    if cfg.optimizer == "sgd":
        for key, g in grads.items():
            params[key] -= lr * g
        return params, state

    if state is None:
        state = AdamState()
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for key, g in grads.items():
        m = state.m.get(key)
        if m is None:
            m = state.m[key] = np.zeros_like(g)
            state.v[key] = np.zeros_like(g)
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        params[key] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state


class Adam:
    """Adam over a single array, used by the spectrogram optimizer."""

    def __init__(self, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.cfg = TrainConfig(optimizer="adam", learning_rate=lr)
        self.state = AdamState(beta1, beta2, eps)

    def step(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        holder = {"x": x}
        optimizer_step(self.state, holder, {"x": g}, self.cfg)
        return holder["x"]
