"""AdamW with decoupled weight decay and staircase learning-rate decay."""
from __future__ import annotations

from dataclasses import dataclass, asdict, field

import numpy as np

from ..errors import InvalidInput


@dataclass
class OptimizerConfig:
    """Hybrid AdamW + L-BFGS training schedule.

    The learning rate follows a staircase lr0 * decay_factor^(tick // 100)
    where the tick counts optimizer iterations by default; set
    ``decay_per="epoch"`` for the per-epoch reading of the same schedule.
    Weight decay is decoupled and applied to weight matrices only (biases and
    linear coefficient matrices are exempt).  ``stop_tol`` ends the AdamW
    phase early once a batch loss falls at or below it (0 disables).
    """

    adamw_epochs: int = 5000
    batch_fraction: float = 0.25
    lr0: float = 1e-3
    decay_factor: float = 0.99
    decay_every: int = 100
    decay_per: str = "iteration"
    weight_decay: float = 1e-4
    lbfgs_max_iter: int = 10000
    lbfgs_tol: float = 1e-10
    lbfgs_memory: int = 10
    seed: int = 0
    stop_tol: float = 0.0

    def __post_init__(self):
        if self.adamw_epochs < 0 or self.lbfgs_max_iter < 0:
            raise InvalidInput("iteration counts must be nonnegative")
        if not 0.0 < self.batch_fraction <= 1.0:
            raise InvalidInput("batch_fraction must lie in (0, 1]")
        if not 0.0 < self.decay_factor <= 1.0:
            raise InvalidInput("decay_factor must lie in (0, 1]")
        if self.decay_per not in ("iteration", "epoch"):
            raise InvalidInput("decay_per must be 'iteration' or 'epoch'")
        if self.decay_every < 1:
            raise InvalidInput("decay_every must be >= 1")

    def replace(self, **kw) -> "OptimizerConfig":
        d = asdict(self)
        d.update(kw)
        return OptimizerConfig(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def learning_rate(config: OptimizerConfig, tick: int) -> float:
    """Staircase-decayed learning rate at the given schedule tick."""
    return config.lr0 * config.decay_factor ** (tick // config.decay_every)


@dataclass
class AdamWState:
    """First/second moment accumulators, one pair per parameter array."""

    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_params(cls, params) -> "AdamWState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adamw_step(state: AdamWState, params, grads, config: OptimizerConfig,
               iteration: int, schedule_tick: int | None = None,
               decay_mask=None, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8) -> None:
    """One in-place AdamW update; ``iteration`` counts from 0.

    ``decay_mask[i]`` marks parameters subject to weight decay (defaults to
    every array of dimension >= 2, i.e. weight matrices but not biases).
    """
    t = iteration + 1
    lr = learning_rate(config, iteration if schedule_tick is None else schedule_tick)
    bc1 = 1.0 - beta1**t
    bc2 = 1.0 - beta2**t
    if decay_mask is None:
        decay_mask = [p.ndim >= 2 for p in params]
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] *= beta1
        state.m[i] += (1.0 - beta1) * g
        state.v[i] *= beta2
        state.v[i] += (1.0 - beta2) * g * g
        update = (state.m[i] / bc1) / (np.sqrt(state.v[i] / bc2) + eps)
        if config.weight_decay and decay_mask[i]:
            update = update + config.weight_decay * p
        p -= lr * update
