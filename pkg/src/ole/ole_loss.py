"""Orthogonal low-rank embedding loss on a minibatch of deep features.

Features are stored samples-as-columns (``D x N``). For class blocks ``X_c``
and the full batch ``X`` the loss is::

    L = sum_c max(delta_clamp, ||X_c||_*) - ||X||_*

and the (sub)gradient with respect to the features is the per-class
``U_c1 V_c1^T`` scattered back to the class columns minus the global
``U_1 V_1^T``. The optimizer negates it; nothing here flips signs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor_core import DEFAULT_SV_THRESHOLD, as_matrix, projected_subgradient, svd


@dataclass(frozen=True)
class OleConfig:
    delta_clamp: float = 1.0
    sv_threshold: float = DEFAULT_SV_THRESHOLD

    def __post_init__(self):
        if self.delta_clamp < 0 or self.sv_threshold < 0:
            raise ValueError("delta_clamp and sv_threshold must be non-negative")


@dataclass(frozen=True)
class FeatureBatch:
    """Deep features (``D x N``) with one integer class label per column."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int | None = None

    def __post_init__(self):
        feats = as_matrix(self.features, name="features")
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.shape[0] != feats.shape[1]:
            raise ValueError(f"expected {feats.shape[1]} labels, got shape {labels.shape}")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            if not np.all(labels == np.round(labels)):
                raise ValueError("labels must be integers")
        labels = labels.astype(np.int64)
        if labels.size and labels.min() < 0:
            raise ValueError("labels must be non-negative")
        if self.class_count is not None and labels.size and labels.max() >= self.class_count:
            raise ValueError(f"label {labels.max()} out of range for {self.class_count} classes")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def size(self) -> int:
        return self.features.shape[1]


def partition_by_class(batch: FeatureBatch) -> list[tuple[int, np.ndarray]]:
    """Split the batch into per-class column blocks, ordered by class id.

    Column order inside a block follows the batch order. Absent classes are
    simply missing from the result.
    """
    return [(c, batch.features[:, idx]) for c, idx in _class_columns(batch.labels)]


def _class_columns(labels: np.ndarray) -> list[tuple[int, np.ndarray]]:
    return [(int(c), np.flatnonzero(labels == c)) for c in np.unique(labels)]


def ole_value_and_grad(batch: FeatureBatch, cfg: OleConfig = OleConfig()) -> tuple[float, np.ndarray]:
    """Loss value and feature gradient from a single SVD per block."""
    if batch.size < 1:
        raise ValueError("OLE loss needs at least one sample")
    X = batch.features
    grad = np.zeros_like(X)
    value = 0.0
    for _, idx in _class_columns(batch.labels):
        res = svd(X[:, idx])
        norm = float(np.sum(res.singular_values))
        # Flat below the clamp; ties at the kink take the zero subgradient.
        if norm > cfg.delta_clamp:
            value += norm
            grad[:, idx] = projected_subgradient(res, cfg.sv_threshold)
        else:
            value += cfg.delta_clamp
    res = svd(X)
    value -= float(np.sum(res.singular_values))
    grad -= projected_subgradient(res, cfg.sv_threshold)
    return value, grad


def ole_forward(batch: FeatureBatch, cfg: OleConfig = OleConfig()) -> float:
    return ole_value_and_grad(batch, cfg)[0]


def ole_backward(batch: FeatureBatch, cfg: OleConfig = OleConfig()) -> np.ndarray:
    return ole_value_and_grad(batch, cfg)[1]
