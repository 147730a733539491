"""NumPy implementations of the hot distance/voting kernels.

This is the fallback backend used when the compiled extension is not
available. Both backends implement the same five functions on float64
C-contiguous inputs; the dispatch layer in ``__init__`` normalizes dtypes
and layouts before calling in here.
"""

from __future__ import annotations

import numpy as np


def sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """All-pairs squared Euclidean distances, shape (B, M).

    Uses the expansion ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b so the bulk of
    the work is one GEMM; values are clipped at zero to absorb cancellation.
    """
    a2 = np.einsum("ij,ij->i", a, a)
    b2 = np.einsum("ij,ij->i", b, b)
    d2 = a2[:, None] + b2[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def _vote(d2: np.ndarray, labels: np.ndarray, n_classes: int,
          inv_two_sigma2: float) -> np.ndarray:
    """Shared tail of the voting rule: shifted exponentials summed per class.

    Subtracting the row minimum before exponentiation keeps the largest
    weight at exactly 1, so the normalizer never underflows no matter how
    small the bandwidth is. Entries at +inf (excluded points) become 0.
    """
    dmin = d2.min(axis=1, keepdims=True)
    with np.errstate(invalid="ignore"):
        w = np.exp((dmin - d2) * inv_two_sigma2)
    w[~np.isfinite(w)] = 0.0
    onehot = np.zeros((labels.shape[0], n_classes))
    onehot[np.arange(labels.shape[0]), labels] = 1.0
    sums = w @ onehot
    return sums / sums.sum(axis=1, keepdims=True)


def rbf_probs(queries: np.ndarray, points: np.ndarray, labels: np.ndarray,
              n_classes: int, inv_two_sigma2: float,
              exclude: np.ndarray) -> np.ndarray:
    """Class distributions of Gaussian-weighted votes, shape (B, n_classes).

    ``exclude[i] >= 0`` drops that point from row i's vote (leave-one-out).
    """
    d2 = sqdist(queries, points)
    rows = np.flatnonzero(exclude >= 0)
    if rows.size:
        d2[rows, exclude[rows]] = np.inf
    return _vote(d2, labels, n_classes, inv_two_sigma2)


def adc_tables(queries: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Per-subspace squared distances to every centroid, shape (B, m, k)."""
    n_sub, k, sub_dim = centroids.shape
    q = queries.reshape(queries.shape[0], n_sub, sub_dim)
    diff = q[:, :, None, :] - centroids[None]
    return np.einsum("bmks,bmks->bmk", diff, diff)


def adc_sqdist(tables: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Squared distances to coded points via table lookups, shape (B, M)."""
    n_sub = tables.shape[1]
    out = tables[:, 0, codes[:, 0]].copy()
    for s in range(1, n_sub):
        out += tables[:, s, codes[:, s]]
    return out


def adc_probs(tables: np.ndarray, codes: np.ndarray, labels: np.ndarray,
              n_classes: int, inv_two_sigma2: float) -> np.ndarray:
    """Voting rule evaluated against coded points, shape (B, n_classes)."""
    d2 = adc_sqdist(tables, codes)
    return _vote(d2, labels, n_classes, inv_two_sigma2)
