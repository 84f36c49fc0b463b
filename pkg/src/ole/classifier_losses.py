"""Softmax cross-entropy and its combination with the OLE term."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ole_loss import FeatureBatch, OleConfig, ole_value_and_grad
from .tensor_core import as_matrix


@dataclass(frozen=True)
class LogitsBatch:
    logits: np.ndarray  # C x N
    labels: np.ndarray

    def __post_init__(self):
        logits = as_matrix(self.logits, name="logits")
        labels = np.asarray(self.labels).astype(np.int64)
        if labels.shape != (logits.shape[1],):
            raise ValueError(f"expected {logits.shape[1]} labels, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[0]):
            raise ValueError(f"labels must lie in [0, {logits.shape[0]})")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "labels", labels)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Column-wise softmax."""
    z = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=0, keepdims=True)


def softmax_cross_entropy(batch: LogitsBatch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient w.r.t. the logits."""
    n = batch.logits.shape[1]
    if n < 1:
        raise ValueError("softmax cross-entropy needs at least one sample")
    cols = np.arange(n)
    z = batch.logits - batch.logits.max(axis=0, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=0))
    loss = float(np.mean(log_norm - z[batch.labels, cols]))
    grad = np.exp(z - log_norm)
    grad[batch.labels, cols] -= 1.0
    grad /= n
    return loss, grad


def combined_loss(
    features: FeatureBatch,
    logits: LogitsBatch,
    lam: float,
    cfg: OleConfig = OleConfig(),
) -> tuple[float, np.ndarray, np.ndarray]:
    """``L_s + lam * L_o`` with the feature and logit gradients kept apart.

    The feature gradient carries only the OLE part; the softmax part reaches
    the features through the classifier during backprop.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if features.size != logits.logits.shape[1]:
        raise ValueError("features and logits disagree on batch size")
    ls, logit_grad = softmax_cross_entropy(logits)
    if lam == 0:
        return ls, np.zeros_like(features.features), logit_grad
    lo, g = ole_value_and_grad(features, cfg)
    return ls + lam * lo, lam * g, logit_grad
