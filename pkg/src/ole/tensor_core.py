"""Dense matrix helpers: thin SVD, nuclear norm and its projected subgradient.

Matrices are plain 2-D ``float64`` numpy arrays. ``as_matrix`` is the single
entry point that enforces the shape/finiteness contract; everything else in
the package assumes its inputs went through it.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

DEFAULT_SV_THRESHOLD = 1e-6


class DecompositionError(RuntimeError):
    """Raised when the SVD fails to converge."""

    def __init__(self, shape):
        self.shape = tuple(shape)
        super().__init__(f"SVD did not converge for matrix of shape {self.shape[0]}x{self.shape[1]}")


class SvdResult(NamedTuple):
    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray


def as_matrix(a, *, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array (no copy when possible)."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return m


def svd(a) -> SvdResult:
    """Thin SVD ``a = u @ diag(s) @ vt`` with ``k = min(m, n)`` components.

    Backed by LAPACK's divide-and-conquer driver, which is deterministic for
    identical input bits. Factor signs are not canonicalized.
    """
    m = as_matrix(a)
    if min(m.shape) < 1:
        raise ValueError(f"cannot decompose an empty matrix of shape {m.shape}")
    try:
        u, s, vt = np.linalg.svd(m, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(m.shape) from exc
    return SvdResult(u, s, vt)


def nuclear_norm(a) -> float:
    """Sum of singular values."""
    return float(np.sum(svd(a).singular_values))


def projected_subgradient(res: SvdResult, sv_threshold: float) -> np.ndarray:
    """``U1 @ V1.T`` over the singular directions with sigma > ``sv_threshold``.

    The singular values come back sorted, so the kept block is a prefix.
    """
    keep = int(np.count_nonzero(res.singular_values > sv_threshold))
    return res.u[:, :keep] @ res.vt[:keep, :]


def nuclear_subgradient(a, sv_threshold: float = DEFAULT_SV_THRESHOLD) -> np.ndarray:
    """Projected subgradient of the nuclear norm at ``a``.

    Parameters
    ----------
    a : array_like, shape (m, n)
    sv_threshold : float
        Singular directions with sigma at or below this value are dropped,
        i.e. the free ``U2 W V2^T`` part of the subdifferential is set to zero.

    Returns
    -------
    ndarray, shape (m, n)
        Zero when every singular value is below the threshold. Its spectral
        norm never exceeds one.
    """
    if sv_threshold < 0:
        raise ValueError("sv_threshold must be non-negative")
    return projected_subgradient(svd(a), sv_threshold)
