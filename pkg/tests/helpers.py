"""Shared test oracles: direct extended-precision evaluations.

Everything here recomputes values from first principles (plain loops over
the defining formulas in longdouble), independent of the library's own
log-domain/vectorized code paths.
"""

from __future__ import annotations

import numpy as np


def brute_force_distribution(y, points, labels, n_classes, sigma,
                             exclude=None):
    """Direct voting-rule evaluation: per-point Gaussian weights in
    longdouble, summed per class, normalized."""
    y = np.asarray(y, dtype=np.longdouble)
    pts = np.asarray(points, dtype=np.longdouble)
    two_s2 = 2 * np.longdouble(sigma) ** 2
    sums = np.zeros(n_classes, dtype=np.longdouble)
    for j in range(pts.shape[0]):
        if exclude is not None and j == exclude:
            continue
        d2 = np.sum((y - pts[j]) ** 2)
        sums[labels[j]] += np.exp(-d2 / two_s2)
    return (sums / sums.sum()).astype(np.float64)


def direct_nca_value(emb, idx, lab, points, imp_labels, sigma):
    """Mean leave-one-out negative log correct-class probability."""
    emb = np.asarray(emb, dtype=np.longdouble)
    points = np.asarray(points, dtype=np.longdouble)
    two_s2 = 2 * np.longdouble(sigma) ** 2
    total = np.longdouble(0)
    for i in range(emb.shape[0]):
        num = den = np.longdouble(0)
        for j in range(points.shape[0]):
            if j == idx[i]:
                continue
            w = np.exp(-np.sum((emb[i] - points[j]) ** 2) / two_s2)
            den += w
            if imp_labels[j] == lab[i]:
                num += w
        total += -np.log(num / den)
    return total / emb.shape[0]


def direct_loose_value(emb, idx, lab, points, imp_labels, sigma, lam):
    emb_l = np.asarray(emb, dtype=np.longdouble)
    pts_l = np.asarray(points, dtype=np.longdouble)
    attach = np.longdouble(0)
    for i in range(emb_l.shape[0]):
        attach += np.sum((emb_l[i] - pts_l[idx[i]]) ** 2)
    attach /= emb_l.shape[0]
    return direct_nca_value(emb, idx, lab, points, imp_labels, sigma) \
        + np.longdouble(lam) * attach


def fd_gradient(fn, array, step=1e-5):
    """Central finite differences of a scalar function of one array."""
    array = np.asarray(array, dtype=np.longdouble)
    grad = np.zeros_like(array, dtype=np.float64)
    flat = array.reshape(-1)
    out = grad.reshape(-1)
    for t in range(flat.size):
        orig = flat[t]
        flat[t] = orig + step
        hi = fn(array)
        flat[t] = orig - step
        lo = fn(array)
        flat[t] = orig
        out[t] = float((hi - lo) / (2 * np.longdouble(step)))
    return grad


def gradient_close(analytic, numeric, tol=1e-4):
    """Per-coordinate relative error with an absolute floor for tiny values."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.abs(numeric), 1e-3)
    return bool((np.abs(analytic - numeric) / denom < tol).all())


def random_loss_instance(rng, batch=4, m=10, dim=3, n_classes=3):
    """A well-posed random instance: every example keeps a same-class point
    after its own is excluded, and all coordinates are O(1)."""
    imp_labels = np.arange(m, dtype=np.int64) % n_classes
    points = rng.normal(0.0, 1.0, (m, dim))
    idx = rng.choice(m, size=batch, replace=False).astype(np.int64)
    lab = imp_labels[idx]
    emb = points[idx] + rng.normal(0.0, 0.5, (batch, dim))
    return emb, idx, lab, points, imp_labels
