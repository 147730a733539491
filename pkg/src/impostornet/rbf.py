"""Gaussian kernel and the class-probability voting rule.

A model's nonparametric head is a set of labeled reference points
("impostors") in embedding space. A query is classified by summing the
Gaussian kernel weight of every point into its class bin and normalizing.
The implementation works in the log domain — the row-minimum squared
distance is subtracted before exponentiation — so the returned distribution
stays valid even when every raw weight underflows (tiny bandwidths).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class KernelParams:
    """Bandwidth of the Gaussian kernel, in embedding-coordinate units."""

    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

    @property
    def inv_two_sigma2(self) -> float:
        return 1.0 / (2.0 * self.sigma * self.sigma)


@dataclass
class ImpostorSet:
    """Labeled reference points voting in the classification rule.

    ``n_classes`` is the global class count; classes with no points simply
    receive probability zero. ``frozen`` marks sets that trainers must not
    move (the fixed scheme and decoded compressed sets).
    """

    points: np.ndarray
    labels: np.ndarray
    n_classes: int
    frozen: bool = False

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("points must be a non-empty (M, d) matrix")
        if self.labels.shape != (self.points.shape[0],):
            raise ValueError("labels must be one integer per point")
        if not np.isfinite(self.points).all():
            raise ValueError("points contain non-finite coordinates")
        if self.n_classes < 1:
            raise ValueError("n_classes must be >= 1")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise ValueError("labels must lie in [0, n_classes)")

    @property
    def count(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def copy(self) -> "ImpostorSet":
        return ImpostorSet(self.points.copy(), self.labels.copy(),
                           self.n_classes, self.frozen)


def _check_vector(name: str, v: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (dim,):
        raise ValueError(f"{name} has shape {v.shape}, expected ({dim},)")
    if not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite values")
    return v


def kernel_weight(y: np.ndarray, c: np.ndarray, params: KernelParams) -> float:
    """exp(-||y - c||^2 / (2 sigma^2)); equals 1 exactly when y == c."""
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1:
        raise ValueError("y must be a vector")
    c = _check_vector("c", c, y.shape[0])
    y = _check_vector("y", y, c.shape[0])
    d2 = float(np.dot(y - c, y - c))
    return float(np.exp(-d2 * params.inv_two_sigma2))


def classify(y: np.ndarray, impostors: ImpostorSet, params: KernelParams,
             exclude: int | None = None) -> np.ndarray:
    """Class distribution for one query, shape (n_classes,).

    ``exclude`` drops one point from the vote (the leave-one-out rule used
    inside the training loss); it requires at least two points.
    """
    y = _check_vector("y", y, impostors.dim)
    if exclude is not None:
        if not 0 <= exclude < impostors.count:
            raise ValueError(f"exclude index {exclude} out of range")
        if impostors.count < 2:
            raise ValueError("exclusion needs at least two points")
        excl = np.array([exclude], dtype=np.int64)
    else:
        excl = None
    return _kernels.rbf_probs(y[None, :], impostors.points, impostors.labels,
                              impostors.n_classes, params.inv_two_sigma2,
                              exclude=excl)[0]


def classify_batch(queries: np.ndarray, impostors: ImpostorSet,
                   params: KernelParams) -> np.ndarray:
    """Class distributions for many queries, shape (B, n_classes)."""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != impostors.dim:
        raise ValueError(f"queries must be (B, {impostors.dim})")
    if not np.isfinite(queries).all():
        raise ValueError("queries contain non-finite values")
    return _kernels.rbf_probs(queries, impostors.points, impostors.labels,
                              impostors.n_classes, params.inv_two_sigma2)


def check_distribution(dist: np.ndarray) -> np.ndarray:
    """Validate a class distribution (entries in [0,1], sum 1)."""
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 1 or dist.shape[0] < 1:
        raise ValueError("distribution must be a non-empty vector")
    if not np.isfinite(dist).all():
        raise ValueError("distribution contains non-finite entries")
    if dist.min() < -1e-12 or dist.max() > 1.0 + 1e-9:
        raise ValueError("distribution entries must lie in [0, 1]")
    if abs(float(dist.sum()) - 1.0) > 1e-6:
        raise ValueError("distribution does not sum to 1")
    return dist


def predict_label(dist: np.ndarray) -> int:
    """Index of the largest probability; ties go to the smallest class id."""
    return int(np.argmax(check_distribution(dist)))
