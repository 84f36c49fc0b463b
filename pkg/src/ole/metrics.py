"""Geometry diagnostics for learned deep features.

All feature matrices are ``D x N`` with one sample per column.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor_core import as_matrix, svd


class ZeroNormError(ValueError):
    def __init__(self, column, what="feature"):
        self.column = int(column)
        super().__init__(f"{what} column {self.column} has zero norm")


class ScoreNormalizationError(ValueError):
    pass


@dataclass
class MetricsReport:
    angle_matrix: np.ndarray
    spectrum: np.ndarray
    knn_accuracy: float
    mean_intra_angle: float
    mean_inter_angle: float
    energy_top_C: float
    novelty_curve: list[tuple[float, float, float]] = field(default_factory=list)


def _unit_columns(F: np.ndarray, what="feature") -> np.ndarray:
    norms = np.linalg.norm(F, axis=0)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroNormError(zero[0], what)
    return F / norms


def sort_by_class(features, labels):
    """Stable reorder of columns by label."""
    order = np.argsort(np.asarray(labels), kind="stable")
    return np.asarray(features)[:, order], np.asarray(labels)[order]


def angle_matrix(features) -> np.ndarray:
    """Pairwise angles between columns, in degrees."""
    U = _unit_columns(as_matrix(features, name="features"))
    cos = U.T @ U
    # rounding absorbed: |cos| within 1e-12 of 1 counts as exactly parallel
    cos[np.abs(cos) > 1.0 - 1e-12] = np.sign(cos[np.abs(cos) > 1.0 - 1e-12])
    ang = np.degrees(np.arccos(cos))
    ang = 0.5 * (ang + ang.T)
    np.fill_diagonal(ang, 0.0)
    return ang


def spectrum(features) -> np.ndarray:
    """Singular values divided by the largest one."""
    s = svd(features).singular_values
    if s[0] == 0:
        raise ValueError("spectrum of the zero matrix is undefined")
    return s / s[0]


def energy_top(features, k: int) -> float:
    """Share of the nuclear norm carried by the ``k`` largest singular values."""
    s = svd(features).singular_values
    total = s.sum()
    if total == 0:
        raise ValueError("energy of the zero matrix is undefined")
    return float(s[:k].sum() / total)


def knn_cosine_accuracy(ref_features, ref_labels, test_features, test_labels) -> float:
    """1-nearest-neighbour accuracy under cosine distance.

    Ties go to the lowest reference index (``argmax`` returns the first hit).
    """
    ref = _unit_columns(as_matrix(ref_features, name="reference"), "reference")
    if ref.shape[1] == 0:
        raise ValueError("empty reference set")
    test = _unit_columns(as_matrix(test_features, name="test"), "test")
    if test.shape[1] == 0:
        return 0.0
    nearest = np.argmax(ref.T @ test, axis=0)
    return float(np.mean(np.asarray(ref_labels)[nearest] == np.asarray(test_labels)))


def block_orthogonality(features, labels) -> tuple[float, float]:
    """Mean off-diagonal intra-class angle and mean inter-class angle."""
    labels = np.asarray(labels)
    if np.unique(labels).size < 2:
        raise ValueError("need at least two classes")
    ang = angle_matrix(features)
    same = labels[:, None] == labels[None, :]
    off_diag = ~np.eye(labels.size, dtype=bool)
    intra = ang[same & off_diag]
    inter = ang[~same]
    return (float(intra.mean()) if intra.size else 0.0), float(inter.mean())


def _check_scores(scores, what):
    scores = as_matrix(scores, name=what)
    if np.any(scores < -1e-12) or np.any(np.abs(scores.sum(axis=0) - 1.0) > 1e-6):
        raise ScoreNormalizationError(f"{what} columns must be probability vectors")
    return scores


def novelty_curve(known_scores, known_labels, novel_scores, thresholds) -> list[tuple[float, float, float]]:
    """Known-class accuracy and novel false-positive ratio per threshold.

    A known sample counts as correct when its top score exceeds ``t`` and its
    argmax is the true label; a novel sample is a false positive when its top
    score exceeds ``t``.
    """
    known = _check_scores(known_scores, "known_scores")
    novel = _check_scores(novel_scores, "novel_scores")
    known_max = known.max(axis=0)
    correct = np.argmax(known, axis=0) == np.asarray(known_labels)
    novel_max = novel.max(axis=0)
    curve = []
    for t in thresholds:
        acc = float(np.mean(correct & (known_max > t))) if known_max.size else 0.0
        fpr = float(np.mean(novel_max > t)) if novel_max.size else 0.0
        curve.append((float(t), acc, fpr))
    return curve


def fpr_at_known_accuracy(curve, target: float = 0.95) -> float | None:
    """FPR at the largest threshold whose known accuracy still reaches ``target``.

    Returns ``None`` when no threshold reaches it.
    """
    ok = [(t, fpr) for t, acc, fpr in curve if acc >= target]
    if not ok:
        return None
    return max(ok)[1]


def score_histogram(max_scores, bins: int = 50) -> list[tuple[float, float, int]]:
    counts, edges = np.histogram(np.asarray(max_scores), bins=bins, range=(0.0, 1.0))
    return [(float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins)]


def compute_report(
    features,
    labels,
    class_count: int,
    ref_features=None,
    ref_labels=None,
    known_scores=None,
    known_labels=None,
    novel_scores=None,
    thresholds=None,
) -> MetricsReport:
    """Assemble the full report for one evaluation pass.

    Zero-norm feature columns (dead ReLU outputs) have no direction: they are
    left out of the angle statistics and counted as 1-NN misses.
    """
    features, labels = sort_by_class(as_matrix(features), labels)
    alive = np.linalg.norm(features, axis=0) > 0
    F, y = features[:, alive], labels[alive]
    if F.shape[1]:
        ang = angle_matrix(F)
    else:
        ang = np.zeros((0, 0))
    if np.unique(y).size >= 2:
        intra, inter = block_orthogonality(F, y)
    else:
        intra, inter = float("nan"), float("nan")
    if np.any(features):
        spec = spectrum(features)
        energy = energy_top(features, class_count)
    else:
        spec, energy = np.zeros(min(features.shape)), 0.0
    knn = float("nan")
    if ref_features is not None:
        ref_features = as_matrix(ref_features)
        ref_alive = np.linalg.norm(ref_features, axis=0) > 0
        if F.shape[1] and ref_alive.any():
            hits = knn_cosine_accuracy(ref_features[:, ref_alive], np.asarray(ref_labels)[ref_alive], F, y)
            knn = hits * F.shape[1] / features.shape[1]
        else:
            knn = 0.0
    curve = []
    if known_scores is not None and novel_scores is not None:
        if thresholds is None:
            thresholds = np.linspace(0.0, 1.0, 101)
        curve = novelty_curve(known_scores, known_labels, novel_scores, thresholds)
    return MetricsReport(ang, spec, knn, intra, inter, energy, curve)
