"""Backend dispatch for the hot distance/voting kernels.

The compiled extension is preferred when it imported cleanly; otherwise the
NumPy fallback is used. Selection happens once at import time and can be
forced with the environment variable ``IMPOSTORNET_BACKEND`` set to
``cython`` or ``python``, or at runtime with :func:`set_backend` (used by
the benchmark to compare both).

All five kernel functions take float64 C-contiguous arrays; the wrappers
here normalize dtypes/layout so callers can pass whatever they have.
"""

from __future__ import annotations

import os

import numpy as np

from . import py_backend

try:
    from . import _core
except ImportError:
    _core = None

_BACKENDS = {"python": py_backend}
if _core is not None:
    _BACKENDS["cython"] = _core


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _pick_default() -> str:
    forced = os.environ.get("IMPOSTORNET_BACKEND", "auto").lower()
    if forced in _BACKENDS:
        return forced
    if forced not in ("", "auto"):
        raise ImportError(
            f"IMPOSTORNET_BACKEND={forced!r} is not available; "
            f"choose one of {available_backends()}"
        )
    return "cython" if "cython" in _BACKENDS else "python"


_active_name = _pick_default()


def set_backend(name: str) -> None:
    """Switch the active backend ('cython' or 'python')."""
    global _active_name
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
    _active_name = name


def active_backend() -> str:
    return _active_name


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def sqdist(a, b) -> np.ndarray:
    """All-pairs squared Euclidean distances, shape (B, M)."""
    return _BACKENDS[_active_name].sqdist(_f64(a), _f64(b))


def rbf_probs(queries, points, labels, n_classes: int, inv_two_sigma2: float,
              exclude=None) -> np.ndarray:
    """Gaussian-vote class distributions, shape (B, n_classes).

    ``exclude`` may be None or an int64 array of per-row point indices to
    drop (-1 meaning no exclusion for that row).
    """
    queries = _f64(queries)
    if exclude is None:
        exclude = np.full(queries.shape[0], -1, dtype=np.int64)
    return _BACKENDS[_active_name].rbf_probs(
        queries, _f64(points), _i64(labels), int(n_classes),
        float(inv_two_sigma2), _i64(exclude))


def adc_tables(queries, centroids) -> np.ndarray:
    """Per-subspace squared-distance lookup tables, shape (B, m, k)."""
    return _BACKENDS[_active_name].adc_tables(_f64(queries), _f64(centroids))


def adc_sqdist(tables, codes) -> np.ndarray:
    """Squared distances to coded points via lookups, shape (B, M)."""
    return _BACKENDS[_active_name].adc_sqdist(_f64(tables), _i64(codes))


def adc_probs(tables, codes, labels, n_classes: int,
              inv_two_sigma2: float) -> np.ndarray:
    """Voting rule against coded points, shape (B, n_classes)."""
    return _BACKENDS[_active_name].adc_probs(
        _f64(tables), _i64(codes), _i64(labels), int(n_classes),
        float(inv_two_sigma2))
