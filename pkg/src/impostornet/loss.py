"""Training losses with analytic gradients.

Both losses share the same classification term: for each batch example the
negative log of the leave-one-out probability of its own class under the
Gaussian voting rule, averaged over the batch. The example's own reference
point is excluded from both the numerator and denominator sums.

The loose variant adds a per-example squared deviation between the
embedding and its own point ("attachment"), weighted by lambda, and its
gradients also flow into the point coordinates.

Gradients with respect to the points are always computed; trainers that
keep points fixed simply discard them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rbf import ImpostorSet, KernelParams

# Floor for -log(p) when the correct-class probability vanishes; keeps
# degenerate batches finite while the anomaly count makes them observable.
LOG_PROB_FLOOR = float(-np.log(np.finfo(np.float64).tiny))


@dataclass(frozen=True)
class LooseParams:
    """Weight of the attachment penalty (lambda >= 0)."""

    lam: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ValueError(f"lambda must be non-negative, got {self.lam}")


@dataclass
class LossValue:
    total: float
    classification_term: float
    attachment_term: float = 0.0
    degenerate_count: int = 0


@dataclass
class LossGradients:
    d_embeddings: np.ndarray  # (B, d)
    d_impostors: np.ndarray   # (M, d)


def _validate_batch(embeddings, batch_indices, batch_labels,
                    impostors: ImpostorSet):
    emb = np.asarray(embeddings, dtype=np.float64)
    idx = np.asarray(batch_indices, dtype=np.int64)
    lab = np.asarray(batch_labels, dtype=np.int64)
    if emb.ndim != 2 or emb.shape[1] != impostors.dim:
        raise ValueError(f"embeddings must be (B, {impostors.dim})")
    if idx.shape != (emb.shape[0],) or lab.shape != (emb.shape[0],):
        raise ValueError("batch_indices and batch_labels must be one per example")
    if impostors.count < 2:
        raise ValueError("need at least two reference points")
    if idx.min() < 0 or idx.max() >= impostors.count:
        raise ValueError("batch index out of range")
    if lab.min() < 0 or lab.max() >= impostors.n_classes:
        raise ValueError("batch label out of range")
    if not np.isfinite(emb).all():
        raise ValueError("embeddings contain non-finite values")
    return emb, idx, lab


def _classification(emb, idx, lab, impostors, params: KernelParams):
    """Shared core: loss terms and d(loss)/d(exponent) coefficients.

    Returns (per_example_loss, g, degenerate) where g[i, j] is the
    derivative of the batch-mean classification term with respect to the
    exponent -||y_i - c_j||^2 / (2 sigma^2).
    """
    B, M = emb.shape[0], impostors.count
    d2 = _kernels.sqdist(emb, impostors.points)
    e = -d2 * params.inv_two_sigma2
    rows = np.arange(B)
    e[rows, idx] = -np.inf

    shift = e.max(axis=1, keepdims=True)
    expe = np.exp(e - shift)
    lse_all = shift[:, 0] + np.log(expe.sum(axis=1))

    same = impostors.labels[None, :] == lab[:, None]
    same[rows, idx] = False
    expe_same = np.where(same, expe, 0.0)
    sums_same = expe_same.sum(axis=1)
    degenerate_rows = sums_same == 0.0

    with np.errstate(divide="ignore"):
        lse_same = shift[:, 0] + np.log(sums_same)
    losses = np.minimum(lse_all - lse_same, LOG_PROB_FLOOR)

    q = expe / expe.sum(axis=1, keepdims=True)
    r = np.zeros_like(q)
    ok = ~degenerate_rows
    r[ok] = expe_same[ok] / sums_same[ok, None]
    g = (q - r) / B
    # a vanished correct-class probability has no usable direction: the
    # term is clamped to a constant, so its gradient is dropped
    g[degenerate_rows] = 0.0
    return losses, g, int(degenerate_rows.sum())


def _chain_to_coordinates(g, emb, points, params: KernelParams):
    """Turn d(loss)/d(exponent) into gradients on embeddings and points."""
    inv_sigma2 = 2.0 * params.inv_two_sigma2
    row = g.sum(axis=1)
    col = g.sum(axis=0)
    d_emb = -(emb * row[:, None] - g @ points) * inv_sigma2
    d_imp = (g.T @ emb - points * col[:, None]) * inv_sigma2
    return d_emb, d_imp


def nca_loss(batch_embeddings, batch_indices, batch_labels,
             impostors: ImpostorSet,
             params: KernelParams) -> tuple[LossValue, LossGradients]:
    """Mean leave-one-out negative log-probability of the correct class."""
    emb, idx, lab = _validate_batch(batch_embeddings, batch_indices,
                                    batch_labels, impostors)
    losses, g, degenerate = _classification(emb, idx, lab, impostors, params)
    d_emb, d_imp = _chain_to_coordinates(g, emb, impostors.points, params)
    cls = float(losses.mean())
    value = LossValue(total=cls, classification_term=cls,
                      degenerate_count=degenerate)
    return value, LossGradients(d_emb, d_imp)


def loose_loss(batch_embeddings, batch_indices, batch_labels,
               impostors: ImpostorSet, params: KernelParams,
               loose: LooseParams) -> tuple[LossValue, LossGradients]:
    """Classification term plus lambda * mean ||embedding - own point||^2."""
    emb, idx, lab = _validate_batch(batch_embeddings, batch_indices,
                                    batch_labels, impostors)
    losses, g, degenerate = _classification(emb, idx, lab, impostors, params)
    d_emb, d_imp = _chain_to_coordinates(g, emb, impostors.points, params)

    B = emb.shape[0]
    deviation = emb - impostors.points[idx]
    attachment = float(np.einsum("ij,ij->", deviation, deviation) / B)
    coeff = 2.0 * loose.lam / B
    d_emb = d_emb + coeff * deviation
    np.add.at(d_imp, idx, -coeff * deviation)

    cls = float(losses.mean())
    value = LossValue(total=cls + loose.lam * attachment,
                      classification_term=cls, attachment_term=attachment,
                      degenerate_count=degenerate)
    return value, LossGradients(d_emb, d_imp)
