from __future__ import annotations

from dataclasses import dataclass
from typing import Dict

import numpy as np

from .autodiff import Tensor


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass
class OptimConfig:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    decay_factor: float = 0.1
    decay_every: int = 10

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("optim.lr0 must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("optim.momentum must be in [0, 1)")
        if self.weight_decay < 0 or self.decay_factor <= 0 or self.decay_every <= 0:
            raise ValueError("optim.weight_decay >= 0, decay_factor > 0 and decay_every > 0 required")


def learning_rate(cfg: OptimConfig, epoch: int) -> float:
    """Step decay: lr0 * decay_factor ** floor(epoch / decay_every)."""
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


class SGD:
    """Momentum SGD with coupled weight decay.

    v <- momentum * v + (grad + weight_decay * p);  p <- p - lr * v
    """

    def __init__(self, params: Dict[str, Tensor], cfg: OptimConfig):
        self.params = {k: p for k, p in params.items() if p.requires_grad}
        self.cfg = cfg
        self.velocity = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def step(self, epoch: int) -> float:
        lr = learning_rate(self.cfg, epoch)
        for name, p in self.params.items():
            if p.grad is None or not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradientError(f"gradient of {name} is missing or not finite")
        for name, p in self.params.items():
            cast = p.data.dtype.type
            beta, wd, step = cast(self.cfg.momentum), cast(self.cfg.weight_decay), cast(lr)
            v = self.velocity[name]
            v *= beta
            v += p.grad + wd * p.data
            p.data -= step * v
        return lr
