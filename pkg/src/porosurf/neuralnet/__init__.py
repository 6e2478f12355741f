"""Minimal feed-forward network engine: tanh MLPs with hand-rolled
reverse-mode gradients, AdamW with staircase learning-rate decay, and an
L-BFGS fine-tuner with strong-Wolfe line search."""

from .mlp import MLP, forward, loss_and_gradient, philox_rng
from .adamw import OptimizerConfig, AdamWState, adamw_step, learning_rate
from .lbfgs import LbfgsResult, lbfgs_minimize

__all__ = [
    "MLP", "forward", "loss_and_gradient", "philox_rng",
    "OptimizerConfig", "AdamWState", "adamw_step", "learning_rate",
    "LbfgsResult", "lbfgs_minimize",
]
