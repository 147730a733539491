"""Product-quantization compression of the reference-point set.

Vectors are split into m coordinate-contiguous subspaces; each subspace
gets its own k-centroid codebook trained by k-means. Distances from an
uncompressed query to coded points go through per-subspace lookup tables
(asymmetric distance computation), which matches the exact squared
distance to the decoded vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rbf import ImpostorSet, KernelParams


def kmeans(points: np.ndarray, k: int, seed: int, max_iters: int = 100,
           return_history: bool = False):
    """Lloyd's algorithm from k-means++ seeding.

    Empty clusters are reseeded to the point currently farthest from its
    centroid, which keeps the objective non-increasing. Stops when the
    assignment stabilizes or after ``max_iters``. Returns (centroids,
    assignments) and, with ``return_history``, the per-iteration objective.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= {n} points, got k={k}")
    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(points, k, rng)

    prev = None
    history = []
    for _ in range(max_iters):
        d2 = _kernels.sqdist(points, centroids)
        assign = d2.argmin(axis=1)
        own = d2[np.arange(n), assign].copy()
        history.append(float(own.sum()))
        counts = np.bincount(assign, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            far = int(own.argmax())
            assign[far] = empty
            own[far] = -1.0
        if prev is not None and np.array_equal(assign, prev):
            break
        prev = assign
        for c in range(k):
            members = points[assign == c]
            centroids[c] = members.mean(axis=0)
    if return_history:
        return centroids, assign, history
    return centroids, assign


def _plusplus_init(points: np.ndarray, k: int, rng) -> np.ndarray:
    n = points.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = rng.integers(n)
    d2min = _kernels.sqdist(points, points[chosen[:1]])[:, 0]
    for i in range(1, k):
        total = d2min.sum()
        if total <= 0.0:
            # all remaining points coincide with a centroid: pick any new index
            remaining = np.setdiff1d(np.arange(n), chosen[:i])
            chosen[i] = rng.choice(remaining)
        else:
            chosen[i] = rng.choice(n, p=d2min / total)
        d2 = _kernels.sqdist(points, points[chosen[i:i + 1]])[:, 0]
        np.minimum(d2min, d2, out=d2min)
    return points[chosen].copy()


@dataclass
class PqCodebook:
    """m sub-quantizers of k centroids each; centroids kept in float32."""

    centroids: np.ndarray  # (m, k, sub_dim)

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if self.centroids.ndim != 3:
            raise ValueError("centroids must be (m, k, sub_dim)")
        if not np.isfinite(self.centroids).all():
            raise ValueError("centroids must be finite")

    @property
    def n_subspaces(self) -> int:
        return self.centroids.shape[0]

    @property
    def k(self) -> int:
        return self.centroids.shape[1]

    @property
    def sub_dim(self) -> int:
        return self.centroids.shape[2]

    @property
    def dim(self) -> int:
        return self.n_subspaces * self.sub_dim

    @property
    def code_dtype(self):
        return np.uint8 if self.k <= 256 else np.uint16

    @property
    def bytes_per_code(self) -> int:
        return self.n_subspaces * self.code_dtype().itemsize


def train_codebook(impostors: ImpostorSet, m: int, k: int | None,
                   seed: int) -> PqCodebook:
    """Independent k-means per coordinate-contiguous subspace slice."""
    d = impostors.dim
    if m < 1 or d % m != 0:
        raise ValueError(f"dimension {d} not divisible into {m} subspaces")
    if k is None:
        k = min(256, impostors.count)
    if impostors.count < k:
        raise ValueError(f"need at least k={k} points, have {impostors.count}")
    sub = d // m
    centroids = np.empty((m, k, sub), dtype=np.float64)
    for s in range(m):
        block = impostors.points[:, s * sub:(s + 1) * sub]
        centroids[s], _ = kmeans(block, k, seed=seed + s)
    return PqCodebook(centroids)


def encode(codebook: PqCodebook, vectors: np.ndarray) -> np.ndarray:
    """Nearest sub-centroid index per subspace (ties to the lowest index)."""
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != codebook.dim:
        raise ValueError(f"vectors must be (N, {codebook.dim})")
    m, sub = codebook.n_subspaces, codebook.sub_dim
    codes = np.empty((vectors.shape[0], m), dtype=codebook.code_dtype)
    cents = codebook.centroids.astype(np.float64)
    for s in range(m):
        block = vectors[:, s * sub:(s + 1) * sub]
        codes[:, s] = _kernels.sqdist(block, cents[s]).argmin(axis=1)
    return codes


def decode(codebook: PqCodebook, codes: np.ndarray) -> np.ndarray:
    """Concatenated sub-centroids for each code row, shape (N, d)."""
    codes = _check_codes(codebook, codes)
    m = codebook.n_subspaces
    parts = [codebook.centroids[s][codes[:, s]] for s in range(m)]
    return np.concatenate(parts, axis=1).astype(np.float64)


def _check_codes(codebook: PqCodebook, codes: np.ndarray) -> np.ndarray:
    codes = np.asarray(codes)
    if codes.ndim != 2 or codes.shape[1] != codebook.n_subspaces:
        raise ValueError(f"codes must be (N, {codebook.n_subspaces})")
    if codes.min() < 0 or codes.max() >= codebook.k:
        raise ValueError("code indexes a missing centroid")
    return codes


def adc_distance_table(y: np.ndarray, codebook: PqCodebook) -> np.ndarray:
    """Squared distances from y's sub-vectors to every centroid, (m, k)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (codebook.dim,):
        raise ValueError(f"query must have dimension {codebook.dim}")
    return _kernels.adc_tables(y[None, :], codebook.centroids)[0]


def adc_distance(table: np.ndarray, code: np.ndarray) -> float:
    """Squared distance to one coded point via table lookups."""
    table = np.asarray(table, dtype=np.float64)
    code = np.asarray(code, dtype=np.int64)
    if code.shape != (table.shape[0],):
        raise ValueError("code length must match table subspaces")
    return float(table[np.arange(table.shape[0]), code].sum())


def classify_compressed(y: np.ndarray, codebook: PqCodebook,
                        codes: np.ndarray, labels: np.ndarray,
                        n_classes: int, params: KernelParams) -> np.ndarray:
    """Voting-rule distribution against coded points, without decoding."""
    return classify_compressed_batch(np.asarray(y, dtype=np.float64)[None, :],
                                     codebook, codes, labels, n_classes,
                                     params)[0]


def classify_compressed_batch(queries: np.ndarray, codebook: PqCodebook,
                              codes: np.ndarray, labels: np.ndarray,
                              n_classes: int,
                              params: KernelParams) -> np.ndarray:
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != codebook.dim:
        raise ValueError(f"queries must be (B, {codebook.dim})")
    codes = _check_codes(codebook, codes)
    tables = _kernels.adc_tables(queries, codebook.centroids)
    return _kernels.adc_probs(tables, codes, labels, n_classes,
                              params.inv_two_sigma2)


def memory_report(codebook: PqCodebook, n_points: int) -> dict[str, int]:
    """Storage accounting: code bytes, codebook bytes, and their sum."""
    code_bytes = n_points * codebook.bytes_per_code
    codebook_bytes = codebook.centroids.size * 4
    return {"code_bytes": code_bytes, "codebook_bytes": codebook_bytes,
            "total_bytes": code_bytes + codebook_bytes}
