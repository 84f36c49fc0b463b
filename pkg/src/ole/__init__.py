"""Orthogonal low-rank embedding loss for deep feature learning, in numpy."""

from .classifier_losses import LogitsBatch, combined_loss, softmax, softmax_cross_entropy
from .ole_loss import FeatureBatch, OleConfig, ole_backward, ole_forward, ole_value_and_grad
from .tensor_core import nuclear_norm, nuclear_subgradient

__all__ = [
    "FeatureBatch",
    "LogitsBatch",
    "OleConfig",
    "combined_loss",
    "nuclear_norm",
    "nuclear_subgradient",
    "ole_backward",
    "ole_forward",
    "ole_value_and_grad",
    "softmax",
    "softmax_cross_entropy",
]
