"""SGD with Nesterov momentum, Adam, and the step learning-rate schedule.

Parameters and gradients are ``name -> ndarray`` dicts. Steps are functional:
they return fresh parameter arrays and update the state object in place.
Weight decay is folded into the gradient as ``g + weight_decay * theta``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    kind: str
    buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)
    step: int = 0
    lr: float = 0.0
    milestones: tuple[float, ...] = (0.5, 0.75)


def _check_shapes(params, grads):
    for k, v in params.items():
        if k not in grads:
            raise ValueError(f"missing gradient for {k!r}")
        if grads[k].shape != v.shape:
            raise ValueError(f"gradient for {k!r} has shape {grads[k].shape}, expected {v.shape}")


def _decayed(name, theta, g, weight_decay, no_decay):
    if weight_decay and name not in no_decay:
        return g + weight_decay * theta
    return g


def sgd_nesterov_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    momentum: float = 0.9,
    weight_decay: float = 0.0,
    no_decay: frozenset[str] = frozenset(),
) -> dict[str, np.ndarray]:
    _check_shapes(params, grads)
    out = {}
    for name, theta in params.items():
        g = _decayed(name, theta, grads[name], weight_decay, no_decay)
        buf = state.buffers.setdefault(name, {})
        v = buf.get("velocity")
        if v is None:
            v = np.zeros_like(theta)
        v = momentum * v - lr * g
        buf["velocity"] = v
        out[name] = theta + momentum * v - lr * g
    state.step += 1
    state.lr = lr
    return out


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
    no_decay: frozenset[str] = frozenset(),
) -> dict[str, np.ndarray]:
    _check_shapes(params, grads)
    t = state.step + 1
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    out = {}
    for name, theta in params.items():
        g = _decayed(name, theta, grads[name], weight_decay, no_decay)
        buf = state.buffers.setdefault(name, {})
        m = beta1 * buf.get("m", 0.0) + (1 - beta1) * g
        v = beta2 * buf.get("v", 0.0) + (1 - beta2) * g * g
        buf["m"], buf["v"] = m, v
        out[name] = theta - lr * (m / c1) / (np.sqrt(v / c2) + eps)
    state.step = t
    state.lr = lr
    return out


def step_schedule(epoch: int, total_epochs: int, base_lr: float, milestones=(0.5, 0.75)) -> float:
    """Divide the rate by ten at each milestone fraction of training."""
    if not 0 <= epoch < total_epochs:
        raise ValueError(f"epoch {epoch} outside [0, {total_epochs})")
    drops = sum(epoch >= m * total_epochs for m in milestones)
    return base_lr / 10**drops
