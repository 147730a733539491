"""Open-set scoring: prediction-entropy separation of seen vs unseen data.

A model trained on L classes is run on a test set of known classes and a
set whose labels are disjoint from training; the entropy of each predicted
class distribution is collected for both, and the two-sample
Kolmogorov-Smirnov distance measures how separable they are.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import LabeledEmbeddingSet
from .rbf import check_distribution
from .train import TrainedModel, predict_proba

HISTOGRAM_BINS = 64


@dataclass
class EntropyReport:
    seen_entropies: np.ndarray
    unseen_entropies: np.ndarray
    ks_distance: float
    bin_edges: np.ndarray      # 65 uniform edges over [0, ln L]
    seen_counts: np.ndarray
    unseen_counts: np.ndarray


def entropy(dist: np.ndarray) -> float:
    """Shannon entropy in nats, with 0 * log 0 taken as 0."""
    dist = check_distribution(dist)
    positive = dist[dist > 0.0]
    return float(-(positive * np.log(positive)).sum())


def _entropies(probs: np.ndarray) -> np.ndarray:
    safe = np.where(probs > 0.0, probs, 1.0)
    return -(safe * np.log(safe)).sum(axis=1)


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample KS statistic: sup |F_a - F_b| over the merged samples."""
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    merged = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, merged, side="right") / a.size
    cdf_b = np.searchsorted(b, merged, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


def open_set_report(model: TrainedModel, seen_set: LabeledEmbeddingSet,
                    unseen_set: LabeledEmbeddingSet,
                    allow_overlap: bool = False) -> EntropyReport:
    """Entropy histograms and KS distance for seen vs unseen inputs.

    The unseen set must carry labels disjoint from the training classes
    (every label >= model.class_count); ``allow_overlap`` bypasses the
    check for diagnostics.
    """
    if not allow_overlap:
        overlapping = unseen_set.labels < model.class_count
        if overlapping.any():
            raise ValueError(
                f"{int(overlapping.sum())} unseen examples carry labels of "
                "training classes")
    seen_e = _entropies(predict_proba(model, seen_set.vectors))
    unseen_e = _entropies(predict_proba(model, unseen_set.vectors))
    top = float(np.log(model.class_count)) if model.class_count > 1 else 1.0
    edges = np.linspace(0.0, top, HISTOGRAM_BINS + 1)
    seen_counts, _ = np.histogram(seen_e, bins=edges)
    unseen_counts, _ = np.histogram(unseen_e, bins=edges)
    return EntropyReport(seen_e, unseen_e, ks_distance(seen_e, unseen_e),
                         edges, seen_counts, unseen_counts)
