"""Mini-batch SGD with momentum, weight decay, and a stepped learning rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import blas

from ..errors import ShapeMismatch


@dataclass
class TrainConfig:
    """Optimization hyperparameters. Defaults follow the reference recipe:
    batch 120, lr 0.001 stepped by lr_factor every lr_step iterations,
    momentum 0.9, weight decay 0.0005. lr_factor 0.1 multiplies the rate by
    one tenth per step; set 0.9 for a literal 10 percent decrease instead.
    """

    batch_size: int = 120
    base_lr: float = 0.001
    lr_step: int = 10000
    lr_factor: float = 0.1
    max_iter: int = 100000
    momentum: float = 0.9
    weight_decay: float = 0.0005
    seed: int = 0
    num_classes: int = 2
    log_every: int = 50
    val_every: int = 250

    def __post_init__(self):
        if min(self.batch_size, self.lr_step, self.max_iter,
               self.log_every, self.val_every, self.num_classes) <= 0:
            raise ValueError("sizes and periods must be positive")
        if self.base_lr <= 0 or self.lr_factor <= 0:
            raise ValueError("learning rate and factor must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError("weight decay must be non-negative")


def learning_rate(cfg: TrainConfig, iteration: int) -> float:
    """lr(iter) = base_lr * lr_factor ** floor(iter / lr_step)."""
    return cfg.base_lr * cfg.lr_factor ** (iteration // cfg.lr_step)


def init_velocity(params: list[np.ndarray]) -> list[np.ndarray]:
    return [np.zeros_like(w) for w in params]


def sgd_step(params, grads, velocity, cfg: TrainConfig, iteration: int) -> None:
    """One in-place update: v = momentum*v - lr*(g + wd*w); w += v.

    Runs as BLAS axpy calls on raveled views, so no temporaries the size of
    the parameters are allocated.
    """
    if not (len(params) == len(grads) == len(velocity)):
        raise ShapeMismatch("params, grads and velocity must align")
    lr = learning_rate(cfg, iteration)
    for w, g, v in zip(params, grads, velocity):
        if w.shape != g.shape or w.shape != v.shape:
            raise ShapeMismatch(f"shape mismatch in update: {w.shape}/{g.shape}/{v.shape}")
        axpy = blas.saxpy if w.dtype == np.float32 else blas.daxpy
        v *= cfg.momentum
        axpy(g.ravel(), v.ravel(), a=-lr)
        if cfg.weight_decay:
            axpy(w.ravel(), v.ravel(), a=-lr * cfg.weight_decay)
        axpy(v.ravel(), w.ravel(), a=1.0)
