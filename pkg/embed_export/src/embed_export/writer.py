"""Writer for the .impd dataset format.

Layout (little-endian): magic "IMPD", version u32, M u32, dim u32, L u32,
then M records of (label u32, dim * float32). This is an independent
implementation of the format contract, not a wrapper around the consumer
library.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"IMPD"
VERSION = 1


def write_impd(path, vectors: np.ndarray, labels: np.ndarray,
               n_classes: int) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    labels = np.asarray(labels)
    if vectors.ndim != 2 or vectors.shape[0] < 1:
        raise ValueError("vectors must be a non-empty (M, dim) matrix")
    if labels.shape != (vectors.shape[0],):
        raise ValueError("labels must be one integer per vector")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("labels must lie in [0, n_classes)")
    if not np.isfinite(vectors).all():
        raise ValueError("vectors contain non-finite values")
    m, dim = vectors.shape
    records = np.empty(m, dtype=np.dtype([("label", "<u4"),
                                          ("vec", "<f4", (dim,))]))
    records["label"] = labels
    records["vec"] = vectors
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IIII", VERSION, m, dim, n_classes))
        fh.write(records.tobytes())
